#pragma once

#include "esrkit/reparam.hpp"

namespace esrkit {

// A model is a flat, topologically ordered node list: node inputs always
// refer to earlier nodes, the first node is the single image input and the
// last node is the output. Blocks are lowered to primitives when a graph is
// built, so the fusion pass is a plain node rewrite (rep_conv -> conv).

enum class NodeKind {
    input,
    conv,
    rep_conv,
    act,
    pixel_shuffle,
    pixel_unshuffle,
    upsample,
    add,
    mul,
    concat,
    slice,
    maxpool,
};

const char* node_kind_name(NodeKind k);
std::optional<NodeKind> node_kind_from_name(const std::string& name);

struct GraphNode {
    std::string id;
    NodeKind kind = NodeKind::input;
    std::vector<std::string> inputs;

    // Only the fields for `kind` are meaningful.
    int channels = 0;                 // input
    ConvSpec conv;                    // conv
    RepBlockSpec rep;                 // rep_conv
    Act act = Act::relu;              // act
    double act_param = 0.0;           // act
    int factor = 1;                   // pixel_shuffle / pixel_unshuffle / upsample
    Resize resize = Resize::nearest;  // upsample
    int slice_begin = 0, slice_end = 0;  // slice
    int pool_k = 2, pool_s = 2;          // maxpool
};

struct ModelGraph {
    int scale = 2;  // super-resolution factor, one of {2, 3, 4}
    std::vector<GraphNode> nodes;

    const GraphNode* find(const std::string& id) const;
    int index_of(const std::string& id) const;  // -1 if absent
};

// Structural validation: unique ids, single leading input node, inputs
// refer to earlier nodes, per-kind arity and attribute sanity, scale in
// {2, 3, 4}. Throws naming the offending node.
void validate(const ModelGraph& g);

// Per-node output shapes for a (n, c_in, h, w) input. Shape errors are
// rethrown with the node id prepended.
std::vector<Shape4> infer_shapes(const ModelGraph& g, int n, int h, int w);

// Executes the graph. Intermediates are released as soon as their last
// consumer has run. The output must measure input dims x scale; anything
// else is a model authoring error and throws.
Tensor forward(const ModelGraph& g, const Tensor& img);

// Rewrites every rep_conv node into the equivalent single conv node.
ModelGraph fuse_graph(const ModelGraph& g);

bool has_rep_nodes(const ModelGraph& g);

}  // namespace esrkit
