#include "esrkit/graph.hpp"

#include <map>
#include <set>

namespace esrkit {

namespace {

const std::pair<NodeKind, const char*> kKindNames[] = {
    {NodeKind::input, "input"},
    {NodeKind::conv, "conv"},
    {NodeKind::rep_conv, "rep_conv"},
    {NodeKind::act, "act"},
    {NodeKind::pixel_shuffle, "pixel_shuffle"},
    {NodeKind::pixel_unshuffle, "pixel_unshuffle"},
    {NodeKind::upsample, "upsample"},
    {NodeKind::add, "add"},
    {NodeKind::mul, "mul"},
    {NodeKind::concat, "concat"},
    {NodeKind::slice, "slice"},
    {NodeKind::maxpool, "maxpool"},
};

void check_arity(const GraphNode& n, std::size_t lo, std::size_t hi) {
    require(n.inputs.size() >= lo && n.inputs.size() <= hi,
            "node '" + n.id + "' (" + node_kind_name(n.kind) + "): expected " +
                (lo == hi ? std::to_string(lo) : std::to_string(lo) + ".." + std::to_string(hi)) +
                " inputs, got " + std::to_string(n.inputs.size()));
}

[[noreturn]] void rethrow_at(const GraphNode& n, const std::exception& e) {
    throw std::invalid_argument("node '" + n.id + "': " + e.what());
}

Shape4 node_out_shape(const GraphNode& n, const std::vector<Shape4>& ins) {
    switch (n.kind) {
        case NodeKind::input:
            fail("node '" + n.id + "': input node cannot be re-evaluated");
        case NodeKind::conv: return conv2d_out_shape(ins[0], n.conv);
        case NodeKind::rep_conv: {
            require(!n.rep.branches.empty(), "rep_conv node has no branches");
            // Spatial dims are preserved by construction.
            Shape4 s = ins[0];
            const int co = n.rep.branches[0].out_channels();
            const int ci = n.rep.branches[0].in_channels();
            require(s.c == ci, "rep_conv consumes " + std::to_string(ci) +
                                   " channels, got " + std::to_string(s.c));
            s.c = co;
            return s;
        }
        case NodeKind::act: return ins[0];
        case NodeKind::pixel_shuffle: {
            require(n.factor >= 1 && ins[0].c % (n.factor * n.factor) == 0,
                    "pixel_shuffle: channels " + std::to_string(ins[0].c) +
                        " not divisible by r^2 = " + std::to_string(n.factor * n.factor));
            return Shape4{ins[0].n, ins[0].c / (n.factor * n.factor), ins[0].h * n.factor,
                          ins[0].w * n.factor};
        }
        case NodeKind::pixel_unshuffle: {
            require(n.factor >= 1 && ins[0].h % n.factor == 0 && ins[0].w % n.factor == 0,
                    "pixel_unshuffle: spatial dims not divisible by r = " +
                        std::to_string(n.factor));
            return Shape4{ins[0].n, ins[0].c * n.factor * n.factor, ins[0].h / n.factor,
                          ins[0].w / n.factor};
        }
        case NodeKind::upsample:
            require(n.factor >= 1, "upsample: factor must be >= 1");
            return Shape4{ins[0].n, ins[0].c, ins[0].h * n.factor, ins[0].w * n.factor};
        case NodeKind::add:
        case NodeKind::mul:
            require(ins[0] == ins[1], std::string(node_kind_name(n.kind)) +
                                          ": operand shapes " + ins[0].str() + " and " +
                                          ins[1].str() + " differ");
            return ins[0];
        case NodeKind::concat: {
            Shape4 s = ins[0];
            for (std::size_t i = 1; i < ins.size(); ++i) {
                require(ins[i].n == s.n && ins[i].h == s.h && ins[i].w == s.w,
                        "concat: operand shapes " + s.str() + " and " + ins[i].str() +
                            " differ outside the channel axis");
                s.c += ins[i].c;
            }
            return s;
        }
        case NodeKind::slice:
            require(0 <= n.slice_begin && n.slice_begin < n.slice_end &&
                        n.slice_end <= ins[0].c,
                    "slice: range [" + std::to_string(n.slice_begin) + "," +
                        std::to_string(n.slice_end) + ") invalid for " +
                        std::to_string(ins[0].c) + " channels");
            return Shape4{ins[0].n, n.slice_end - n.slice_begin, ins[0].h, ins[0].w};
        case NodeKind::maxpool:
            require(n.pool_k >= 1 && n.pool_s >= 1 && ins[0].h >= n.pool_k &&
                        ins[0].w >= n.pool_k,
                    "maxpool: input " + std::to_string(ins[0].h) + "x" +
                        std::to_string(ins[0].w) + " too small for window " +
                        std::to_string(n.pool_k));
            return Shape4{ins[0].n, ins[0].c, (ins[0].h - n.pool_k) / n.pool_s + 1,
                          (ins[0].w - n.pool_k) / n.pool_s + 1};
    }
    fail("node '" + n.id + "': unknown node kind");
}

Tensor node_eval(const GraphNode& n, const std::vector<const Tensor*>& ins) {
    switch (n.kind) {
        case NodeKind::input: fail("input node cannot be evaluated");
        case NodeKind::conv: return conv2d(*ins[0], n.conv);
        case NodeKind::rep_conv: return forward_unfused(*ins[0], n.rep);
        case NodeKind::act: return activation(*ins[0], n.act, n.act_param);
        case NodeKind::pixel_shuffle: return pixel_shuffle(*ins[0], n.factor);
        case NodeKind::pixel_unshuffle: return pixel_unshuffle(*ins[0], n.factor);
        case NodeKind::upsample: return upsample(*ins[0], n.factor, n.resize);
        case NodeKind::add: return add(*ins[0], *ins[1]);
        case NodeKind::mul: return mul(*ins[0], *ins[1]);
        case NodeKind::concat: {
            std::vector<Tensor> parts;
            parts.reserve(ins.size());
            for (const Tensor* t : ins) parts.push_back(*t);
            return channel_concat(parts);
        }
        case NodeKind::slice: return channel_slice(*ins[0], n.slice_begin, n.slice_end);
        case NodeKind::maxpool: return maxpool(*ins[0], n.pool_k, n.pool_s);
    }
    fail("node '" + n.id + "': unknown node kind");
}

}  // namespace

const char* node_kind_name(NodeKind k) {
    for (const auto& [kind, name] : kKindNames)
        if (kind == k) return name;
    fail("node kind: unknown value");
}

std::optional<NodeKind> node_kind_from_name(const std::string& name) {
    for (const auto& [kind, kname] : kKindNames)
        if (name == kname) return kind;
    return std::nullopt;
}

const GraphNode* ModelGraph::find(const std::string& id) const {
    const int i = index_of(id);
    return i < 0 ? nullptr : &nodes[std::size_t(i)];
}

int ModelGraph::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == id) return int(i);
    return -1;
}

void validate(const ModelGraph& g) {
    require(g.scale == 2 || g.scale == 3 || g.scale == 4,
            "model: scale must be one of {2, 3, 4}, got " + std::to_string(g.scale));
    require(!g.nodes.empty(), "model: graph has no nodes");
    require(g.nodes.front().kind == NodeKind::input,
            "model: first node must be the input, got kind '" +
                std::string(node_kind_name(g.nodes.front().kind)) + "'");

    std::set<std::string> seen;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& n = g.nodes[i];
        require(!n.id.empty(), "model: node " + std::to_string(i) + " has an empty id");
        require(seen.insert(n.id).second, "model: duplicate node id '" + n.id + "'");
        require(i == 0 || n.kind != NodeKind::input,
                "node '" + n.id + "': only the first node may be an input");

        switch (n.kind) {
            case NodeKind::input:
                check_arity(n, 0, 0);
                require(n.channels >= 1, "node '" + n.id + "': input channel count " +
                                             std::to_string(n.channels) + " must be >= 1");
                break;
            case NodeKind::add:
            case NodeKind::mul: check_arity(n, 2, 2); break;
            case NodeKind::concat: check_arity(n, 1, std::size_t(-1)); break;
            default: check_arity(n, 1, 1); break;
        }
        for (const std::string& ref : n.inputs) {
            const int j = g.index_of(ref);
            require(j >= 0, "node '" + n.id + "': input '" + ref + "' does not exist");
            require(std::size_t(j) < i,
                    "node '" + n.id + "': input '" + ref +
                        "' does not precede it (the node list must be topological)");
        }
        if (n.kind == NodeKind::conv)
            require(n.conv.weight.numel() > 0, "node '" + n.id + "': conv has no weights");
        if (n.kind == NodeKind::rep_conv)
            require(!n.rep.branches.empty(), "node '" + n.id + "': rep_conv has no branches");
    }
}

std::vector<Shape4> infer_shapes(const ModelGraph& g, int n, int h, int w) {
    validate(g);
    std::vector<Shape4> shapes(g.nodes.size());
    shapes[0] = Shape4{n, g.nodes[0].channels, h, w};
    for (std::size_t i = 1; i < g.nodes.size(); ++i) {
        const GraphNode& node = g.nodes[i];
        std::vector<Shape4> ins;
        ins.reserve(node.inputs.size());
        for (const std::string& ref : node.inputs)
            ins.push_back(shapes[std::size_t(g.index_of(ref))]);
        try {
            shapes[i] = node_out_shape(node, ins);
        } catch (const std::invalid_argument& e) {
            rethrow_at(node, e);
        }
    }
    return shapes;
}

Tensor forward(const ModelGraph& g, const Tensor& img) {
    validate(g);
    require(img.shape.c == g.nodes[0].channels,
            "forward: image has " + std::to_string(img.shape.c) +
                " channels but the model expects " + std::to_string(g.nodes[0].channels));
    require(img.shape.n >= 1 && img.shape.h >= 1 && img.shape.w >= 1,
            "forward: empty input " + img.shape.str());

    // Remaining-consumer counts for eager release.
    std::vector<int> pending(g.nodes.size(), 0);
    for (const GraphNode& n : g.nodes)
        for (const std::string& ref : n.inputs) pending[std::size_t(g.index_of(ref))]++;
    pending.back() += 1;  // the output survives

    std::vector<Tensor> values(g.nodes.size());
    values[0] = img;
    for (std::size_t i = 1; i < g.nodes.size(); ++i) {
        const GraphNode& node = g.nodes[i];
        std::vector<const Tensor*> ins;
        std::vector<int> in_idx;
        ins.reserve(node.inputs.size());
        for (const std::string& ref : node.inputs) {
            const int j = g.index_of(ref);
            in_idx.push_back(j);
            ins.push_back(&values[std::size_t(j)]);
        }
        try {
            values[i] = node_eval(node, ins);
        } catch (const std::invalid_argument& e) {
            rethrow_at(node, e);
        }
        for (int j : in_idx)
            if (--pending[std::size_t(j)] == 0) {
                values[std::size_t(j)].data.clear();
                values[std::size_t(j)].data.shrink_to_fit();
            }
    }

    Tensor out = std::move(values.back());
    require(out.shape.h == img.shape.h * g.scale && out.shape.w == img.shape.w * g.scale,
            "forward: output " + out.shape.str() + " is not input dims x scale (" +
                std::to_string(g.scale) + "x of " + img.shape.str() + ")");
    return out;
}

ModelGraph fuse_graph(const ModelGraph& g) {
    validate(g);
    ModelGraph out = g;
    for (GraphNode& n : out.nodes) {
        if (n.kind != NodeKind::rep_conv) continue;
        n.conv = fuse_block(n.rep);
        n.rep = RepBlockSpec{};
        n.kind = NodeKind::conv;
    }
    return out;
}

bool has_rep_nodes(const ModelGraph& g) {
    for (const GraphNode& n : g.nodes)
        if (n.kind == NodeKind::rep_conv) return true;
    return false;
}

}  // namespace esrkit
