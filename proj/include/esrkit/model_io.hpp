#pragma once

// Model serialization: a JSON text header describing the graph plus a binary
// weights blob ("ESRW") holding every tensor as little-endian fp32.

#include <iosfwd>
#include <map>
#include <string>

#include "esrkit/graph.hpp"

namespace esrkit {

using WeightMap = std::map<std::string, Tensor>;

// ESRW blob: magic "ESRW", version u32, then records until EOF.
// Record: name_len u32, name bytes (UTF-8), rank u32, rank dims (u32 each),
// payload of prod(dims) fp32 values. All integers and floats little-endian.
void write_weights(std::ostream& out, const WeightMap& weights);
WeightMap read_weights(std::istream& in);
void write_weights_file(const std::string& path, const WeightMap& weights);
WeightMap read_weights_file(const std::string& path);

// Splits the graph into a JSON-serializable skeleton plus its tensors.
// Weight keys are derived from node ids: "<id>.w" / "<id>.b" for convs,
// "<id>.br<k>.w" etc. for re-param branches.
WeightMap collect_weights(const ModelGraph& g);

// JSON header <-> graph. save_model writes "<path>" (JSON) and the weights
// blob next to it (the header's "weights" field, resolved relative to the
// header's directory on load).
std::string graph_to_json(const ModelGraph& g, const std::string& weights_name);
ModelGraph graph_from_json(const std::string& text, const WeightMap& weights);

void save_model(const std::string& path, const ModelGraph& g);
ModelGraph load_model(const std::string& path);

// Structural + bitwise weight equality, for round-trip checks.
bool model_equal(const ModelGraph& a, const ModelGraph& b);

}  // namespace esrkit
