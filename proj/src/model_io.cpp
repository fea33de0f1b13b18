#include "esrkit/model_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace esrkit {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'E', 'S', 'R', 'W'};
constexpr std::uint32_t kBlobVersion = 1;
constexpr int kModelVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
        std::uint32_t(b[3]) << 24;
    return true;
}

void put_f32(std::ostream& out, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
}

float read_f32(std::uint32_t v) {
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

std::string dirname_of(const std::string& path) {
    const auto pos = path.find_last_of('/');
    return pos == std::string::npos ? std::string(".") : path.substr(0, pos);
}

std::string swap_ext(const std::string& filename, const std::string& ext) {
    const auto slash = filename.find_last_of('/');
    const auto dot = filename.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return filename + ext;
    return filename.substr(0, dot) + ext;
}

std::string basename_of(const std::string& path) {
    const auto pos = path.find_last_of('/');
    return pos == std::string::npos ? path : path.substr(pos + 1);
}

}  // namespace

void write_weights(std::ostream& out, const WeightMap& weights) {
    out.write(kMagic, 4);
    put_u32(out, kBlobVersion);
    for (const auto& [name, t] : weights) {
        require(!name.empty(), "weights blob: empty tensor name");
        put_u32(out, std::uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        const std::uint32_t dims[4] = {std::uint32_t(t.shape.n), std::uint32_t(t.shape.c),
                                       std::uint32_t(t.shape.h), std::uint32_t(t.shape.w)};
        std::uint32_t rank = 4;
        while (rank > 1 && dims[rank - 1] == 1) --rank;
        put_u32(out, rank);
        for (std::uint32_t i = 0; i < rank; ++i) put_u32(out, dims[i]);
        for (float f : t.data) put_f32(out, f);
    }
    require(bool(out), "weights blob: write failed");
}

WeightMap read_weights(std::istream& in) {
    char magic[4];
    require(bool(in.read(magic, 4)) && std::memcmp(magic, kMagic, 4) == 0,
            "weights blob: bad magic, not an ESRW file");
    std::uint32_t version = 0;
    require(get_u32(in, version), "weights blob: truncated header");
    require(version == kBlobVersion,
            "weights blob: unsupported version " + std::to_string(version));
    WeightMap weights;
    std::uint32_t name_len = 0;
    while (get_u32(in, name_len)) {
        require(name_len >= 1 && name_len <= 4096, "weights blob: implausible name length");
        std::string name(name_len, '\0');
        require(bool(in.read(name.data(), std::streamsize(name_len))),
                "weights blob: truncated tensor name");
        require(!weights.count(name), "weights blob: duplicate tensor '" + name + "'");
        std::uint32_t rank = 0;
        require(get_u32(in, rank), "weights blob: truncated record for '" + name + "'");
        require(rank >= 1 && rank <= 4,
                "weights blob: tensor '" + name + "' has rank " + std::to_string(rank));
        int dims[4] = {1, 1, 1, 1};
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint32_t d = 0;
            require(get_u32(in, d), "weights blob: truncated dims for '" + name + "'");
            require(d >= 1 && d <= (1u << 24),
                    "weights blob: tensor '" + name + "' has implausible dim " +
                        std::to_string(d));
            dims[i] = int(d);
            count *= d;
        }
        require(count <= (1ull << 31), "weights blob: tensor '" + name + "' too large");
        Tensor t(dims[0], dims[1], dims[2], dims[3]);
        for (std::uint64_t i = 0; i < count; ++i) {
            std::uint32_t v = 0;
            require(get_u32(in, v), "weights blob: truncated payload for '" + name + "'");
            t.data[i] = read_f32(v);
        }
        weights.emplace(std::move(name), std::move(t));
    }
    return weights;
}

void write_weights_file(const std::string& path, const WeightMap& weights) {
    std::ofstream out(path, std::ios::binary);
    require(bool(out), "cannot open for writing: " + path);
    write_weights(out, weights);
    require(bool(out), "write failed: " + path);
}

WeightMap read_weights_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "cannot open: " + path);
    return read_weights(in);
}

namespace {

Tensor vec_tensor(const std::vector<float>& v) {
    Tensor t(int(v.size()), 1, 1, 1);
    t.data = v;
    return t;
}

void collect_conv(WeightMap& w, const std::string& prefix, const ConvSpec& c) {
    w.emplace(prefix + ".w", c.weight);
    if (c.has_bias()) w.emplace(prefix + ".b", vec_tensor(c.bias));
}

void collect_branch(WeightMap& w, const std::string& prefix, const BranchSpec& br) {
    switch (br.kind) {
        case BranchKind::conv: collect_conv(w, prefix, br.conv); break;
        case BranchKind::seq:
            for (std::size_t j = 0; j < br.seq.size(); ++j)
                collect_conv(w, prefix + ".s" + std::to_string(j), br.seq[j]);
            break;
        case BranchKind::identity: break;
        case BranchKind::scaled_identity: w.emplace(prefix + ".gamma", vec_tensor(br.gamma)); break;
        case BranchKind::fixed_filter:
            w.emplace(prefix + ".scale", vec_tensor(br.scale));
            if (br.pre) collect_conv(w, prefix + ".pre", *br.pre);
            break;
    }
}

json conv_to_json(const ConvSpec& c) {
    json j;
    j["stride"] = {c.stride_h, c.stride_w};
    j["pad"] = {c.pad_h, c.pad_w};
    j["dil"] = {c.dil_h, c.dil_w};
    j["groups"] = c.groups;
    j["bias"] = c.has_bias();
    return j;
}

const char* branch_kind_name(BranchKind k) {
    switch (k) {
        case BranchKind::conv: return "conv";
        case BranchKind::seq: return "seq";
        case BranchKind::identity: return "identity";
        case BranchKind::scaled_identity: return "scaled_identity";
        case BranchKind::fixed_filter: return "fixed_filter";
    }
    fail("branch: unknown kind");
}

json branch_to_json(const BranchSpec& br) {
    json j;
    j["kind"] = branch_kind_name(br.kind);
    switch (br.kind) {
        case BranchKind::conv: j["conv"] = conv_to_json(br.conv); break;
        case BranchKind::seq: {
            json convs = json::array();
            for (const auto& c : br.seq) convs.push_back(conv_to_json(c));
            j["convs"] = std::move(convs);
            break;
        }
        case BranchKind::identity: j["channels"] = br.channels; break;
        case BranchKind::scaled_identity: break;  // gamma lives in the blob
        case BranchKind::fixed_filter:
            j["filter"] = fixed_filter_name(br.filter);
            if (br.pre) j["pre"] = conv_to_json(*br.pre);
            break;
    }
    return j;
}

const Tensor& want(const WeightMap& w, const std::string& name) {
    const auto it = w.find(name);
    require(it != w.end(), "model: weight '" + name + "' missing from blob");
    return it->second;
}

std::vector<float> want_vec(const WeightMap& w, const std::string& name) {
    const Tensor& t = want(w, name);
    require(t.shape.c == 1 && t.shape.h == 1 && t.shape.w == 1,
            "model: weight '" + name + "' should be a vector, got " + t.shape.str());
    return t.data;
}

ConvSpec conv_from_json(const json& j, const WeightMap& w, const std::string& prefix) {
    ConvSpec c;
    c.weight = want(w, prefix + ".w");
    if (j.value("bias", false)) c.bias = want_vec(w, prefix + ".b");
    if (j.contains("stride")) {
        c.stride_h = j["stride"].at(0).get<int>();
        c.stride_w = j["stride"].at(1).get<int>();
    }
    if (j.contains("pad")) {
        c.pad_h = j["pad"].at(0).get<int>();
        c.pad_w = j["pad"].at(1).get<int>();
    }
    if (j.contains("dil")) {
        c.dil_h = j["dil"].at(0).get<int>();
        c.dil_w = j["dil"].at(1).get<int>();
    }
    c.groups = j.value("groups", 1);
    return c;
}

BranchSpec branch_from_json(const json& j, const WeightMap& w, const std::string& prefix) {
    BranchSpec br;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv") {
        br.kind = BranchKind::conv;
        br.conv = conv_from_json(j.at("conv"), w, prefix);
    } else if (kind == "seq") {
        br.kind = BranchKind::seq;
        const json& convs = j.at("convs");
        require(convs.is_array() && !convs.empty(), "model: seq branch needs convolutions");
        for (std::size_t i = 0; i < convs.size(); ++i)
            br.seq.push_back(conv_from_json(convs[i], w, prefix + ".s" + std::to_string(i)));
    } else if (kind == "identity") {
        br.kind = BranchKind::identity;
        br.channels = j.at("channels").get<int>();
    } else if (kind == "scaled_identity") {
        br.kind = BranchKind::scaled_identity;
        br.gamma = want_vec(w, prefix + ".gamma");
    } else if (kind == "fixed_filter") {
        br.kind = BranchKind::fixed_filter;
        const std::string fname = j.at("filter").get<std::string>();
        const auto f = fixed_filter_from_name(fname);
        require(bool(f), "model: unknown fixed filter '" + fname + "'");
        br.filter = *f;
        br.scale = want_vec(w, prefix + ".scale");
        if (j.contains("pre")) br.pre = conv_from_json(j.at("pre"), w, prefix + ".pre");
    } else {
        fail("model: unknown branch kind '" + kind + "'");
    }
    return br;
}

}  // namespace

WeightMap collect_weights(const ModelGraph& g) {
    WeightMap w;
    for (const auto& node : g.nodes) {
        if (node.kind == NodeKind::conv) {
            collect_conv(w, node.id, node.conv);
        } else if (node.kind == NodeKind::rep_conv) {
            for (std::size_t k = 0; k < node.rep.branches.size(); ++k)
                collect_branch(w, node.id + ".br" + std::to_string(k), node.rep.branches[k]);
        }
    }
    return w;
}

std::string graph_to_json(const ModelGraph& g, const std::string& weights_name) {
    json root;
    root["format"] = "esrkit-model";
    root["version"] = kModelVersion;
    root["scale"] = g.scale;
    root["weights"] = weights_name;
    json nodes = json::array();
    for (const auto& node : g.nodes) {
        json j;
        j["id"] = node.id;
        j["kind"] = node_kind_name(node.kind);
        if (!node.inputs.empty()) j["inputs"] = node.inputs;
        switch (node.kind) {
            case NodeKind::input: j["channels"] = node.channels; break;
            case NodeKind::conv: j["conv"] = conv_to_json(node.conv); break;
            case NodeKind::rep_conv: {
                j["target"] = {node.rep.target_kh, node.rep.target_kw};
                json branches = json::array();
                for (const auto& br : node.rep.branches) branches.push_back(branch_to_json(br));
                j["branches"] = std::move(branches);
                break;
            }
            case NodeKind::act:
                j["act"] = act_name(node.act);
                j["param"] = node.act_param;
                break;
            case NodeKind::pixel_shuffle:
            case NodeKind::pixel_unshuffle: j["factor"] = node.factor; break;
            case NodeKind::upsample:
                j["factor"] = node.factor;
                j["mode"] = node.resize == Resize::bilinear ? "bilinear" : "nearest";
                break;
            case NodeKind::add:
            case NodeKind::mul:
            case NodeKind::concat: break;
            case NodeKind::slice:
                j["begin"] = node.slice_begin;
                j["end"] = node.slice_end;
                break;
            case NodeKind::maxpool:
                j["k"] = node.pool_k;
                j["stride"] = node.pool_s;
                break;
        }
        nodes.push_back(std::move(j));
    }
    root["nodes"] = std::move(nodes);
    return root.dump(2) + "\n";
}

ModelGraph graph_from_json(const std::string& text, const WeightMap& weights) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        fail("model: invalid JSON: " + std::string(e.what()));
    }
    try {
        require(root.value("format", "") == "esrkit-model",
                "model: missing or wrong \"format\" field, expected \"esrkit-model\"");
        const int version = root.value("version", 0);
        require(version == kModelVersion,
                "model: unsupported version " + std::to_string(version));
        ModelGraph g;
        g.scale = root.at("scale").get<int>();
        for (const json& j : root.at("nodes")) {
            GraphNode node;
            node.id = j.at("id").get<std::string>();
            const std::string kind = j.at("kind").get<std::string>();
            const auto k = node_kind_from_name(kind);
            require(bool(k), "model: node '" + node.id + "': unknown kind '" + kind + "'");
            node.kind = *k;
            if (j.contains("inputs")) node.inputs = j["inputs"].get<std::vector<std::string>>();
            switch (node.kind) {
                case NodeKind::input: node.channels = j.at("channels").get<int>(); break;
                case NodeKind::conv:
                    node.conv = conv_from_json(j.at("conv"), weights, node.id);
                    break;
                case NodeKind::rep_conv: {
                    if (j.contains("target")) {
                        node.rep.target_kh = j["target"].at(0).get<int>();
                        node.rep.target_kw = j["target"].at(1).get<int>();
                    }
                    const json& branches = j.at("branches");
                    for (std::size_t b = 0; b < branches.size(); ++b)
                        node.rep.branches.push_back(branch_from_json(
                            branches[b], weights, node.id + ".br" + std::to_string(b)));
                    break;
                }
                case NodeKind::act: {
                    const std::string aname = j.at("act").get<std::string>();
                    const auto a = act_from_name(aname);
                    require(bool(a),
                            "model: node '" + node.id + "': unknown activation '" + aname + "'");
                    node.act = *a;
                    node.act_param =
                        j.contains("param") ? j["param"].get<double>() : act_default_param(*a);
                    break;
                }
                case NodeKind::pixel_shuffle:
                case NodeKind::pixel_unshuffle: node.factor = j.at("factor").get<int>(); break;
                case NodeKind::upsample: {
                    node.factor = j.at("factor").get<int>();
                    const std::string mode = j.value("mode", "nearest");
                    require(mode == "nearest" || mode == "bilinear",
                            "model: node '" + node.id + "': unknown resize mode '" + mode + "'");
                    node.resize = mode == "bilinear" ? Resize::bilinear : Resize::nearest;
                    break;
                }
                case NodeKind::add:
                case NodeKind::mul:
                case NodeKind::concat: break;
                case NodeKind::slice:
                    node.slice_begin = j.at("begin").get<int>();
                    node.slice_end = j.at("end").get<int>();
                    break;
                case NodeKind::maxpool:
                    node.pool_k = j.at("k").get<int>();
                    node.pool_s = j.at("stride").get<int>();
                    break;
            }
            g.nodes.push_back(std::move(node));
        }
        validate(g);
        return g;
    } catch (const json::exception& e) {
        fail("model: malformed header: " + std::string(e.what()));
    }
}

void save_model(const std::string& path, const ModelGraph& g) {
    validate(g);
    const std::string weights_name = swap_ext(basename_of(path), ".esrw");
    const std::string weights_path = dirname_of(path) + "/" + weights_name;
    write_weights_file(weights_path, collect_weights(g));
    std::ofstream out(path, std::ios::binary);
    require(bool(out), "cannot open for writing: " + path);
    out << graph_to_json(g, weights_name);
    require(bool(out), "write failed: " + path);
}

ModelGraph load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "cannot open: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    json root;
    try {
        root = json::parse(text.str());
    } catch (const json::exception& e) {
        fail("model: invalid JSON in " + path + ": " + std::string(e.what()));
    }
    std::string weights_name;
    try {
        weights_name = root.at("weights").get<std::string>();
    } catch (const json::exception&) {
        fail("model: missing \"weights\" field in " + path);
    }
    require(!weights_name.empty(), "model: empty \"weights\" field in " + path);
    const std::string weights_path = weights_name.front() == '/'
                                         ? weights_name
                                         : dirname_of(path) + "/" + weights_name;
    return graph_from_json(text.str(), read_weights_file(weights_path));
}

namespace {

bool tensor_equal(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
}

bool conv_equal(const ConvSpec& a, const ConvSpec& b) {
    return tensor_equal(a.weight, b.weight) && a.bias == b.bias && a.stride_h == b.stride_h &&
           a.stride_w == b.stride_w && a.pad_h == b.pad_h && a.pad_w == b.pad_w &&
           a.dil_h == b.dil_h && a.dil_w == b.dil_w && a.groups == b.groups;
}

bool branch_equal(const BranchSpec& a, const BranchSpec& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case BranchKind::conv: return conv_equal(a.conv, b.conv);
        case BranchKind::seq:
            if (a.seq.size() != b.seq.size()) return false;
            for (std::size_t i = 0; i < a.seq.size(); ++i)
                if (!conv_equal(a.seq[i], b.seq[i])) return false;
            return true;
        case BranchKind::identity: return a.channels == b.channels;
        case BranchKind::scaled_identity: return a.gamma == b.gamma;
        case BranchKind::fixed_filter:
            if (a.filter != b.filter || a.scale != b.scale) return false;
            if (bool(a.pre) != bool(b.pre)) return false;
            return !a.pre || conv_equal(*a.pre, *b.pre);
    }
    return false;
}

}  // namespace

bool model_equal(const ModelGraph& a, const ModelGraph& b) {
    if (a.scale != b.scale || a.nodes.size() != b.nodes.size()) return false;
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        const GraphNode& x = a.nodes[i];
        const GraphNode& y = b.nodes[i];
        if (x.id != y.id || x.kind != y.kind || x.inputs != y.inputs) return false;
        switch (x.kind) {
            case NodeKind::input:
                if (x.channels != y.channels) return false;
                break;
            case NodeKind::conv:
                if (!conv_equal(x.conv, y.conv)) return false;
                break;
            case NodeKind::rep_conv: {
                if (x.rep.target_kh != y.rep.target_kh || x.rep.target_kw != y.rep.target_kw)
                    return false;
                if (x.rep.branches.size() != y.rep.branches.size()) return false;
                for (std::size_t k = 0; k < x.rep.branches.size(); ++k)
                    if (!branch_equal(x.rep.branches[k], y.rep.branches[k])) return false;
                break;
            }
            case NodeKind::act:
                if (x.act != y.act || x.act_param != y.act_param) return false;
                break;
            case NodeKind::pixel_shuffle:
            case NodeKind::pixel_unshuffle:
                if (x.factor != y.factor) return false;
                break;
            case NodeKind::upsample:
                if (x.factor != y.factor || x.resize != y.resize) return false;
                break;
            case NodeKind::add:
            case NodeKind::mul:
            case NodeKind::concat: break;
            case NodeKind::slice:
                if (x.slice_begin != y.slice_begin || x.slice_end != y.slice_end) return false;
                break;
            case NodeKind::maxpool:
                if (x.pool_k != y.pool_k || x.pool_s != y.pool_s) return false;
                break;
        }
    }
    return true;
}

}  // namespace esrkit
