#include "hmtc/serialize.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hmtc {

namespace {

json matrix_to_json(const Matrix& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = m.data();
    return j;
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.data().size()) throw std::invalid_argument("matrix_from_json: size mismatch");
    m.data() = std::move(data);
    return m;
}

json packed_bits(const MaskMatrix& m) {
    std::vector<std::uint64_t> words((m.on.size() + 63) / 64, 0);
    for (size_t i = 0; i < m.on.size(); ++i)
        if (m.on[i]) words[i / 64] |= (1ULL << (i % 64));
    json j;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    j["bits"] = words;
    return j;
}

MaskMatrix unpack_bits(const json& j) {
    MaskMatrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    auto words = j.at("bits").get<std::vector<std::uint64_t>>();
    if (words.size() != (m.on.size() + 63) / 64) throw std::invalid_argument("mask_from_json: size mismatch");
    for (size_t i = 0; i < m.on.size(); ++i) m.on[i] = (words[i / 64] >> (i % 64)) & 1u;
    return m;
}

} // namespace

json config_to_json(const ModelConfig& cfg) {
    json j;
    j["d"] = cfg.d;
    j["l"] = cfg.l;
    j["h"] = cfg.h;
    j["I"] = cfg.I;
    j["d_model"] = cfg.d_model();
    j["d_key"] = cfg.d_key;
    j["d_v"] = cfg.d_v();
    j["d_ff"] = cfg.d_ff;
    j["N"] = cfg.N;
    j["J"] = cfg.J;
    j["beta"] = cfg.beta;
    j["K"] = cfg.K;
    return j;
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.d = j.at("d").get<int>();
    cfg.l = j.at("l").get<int>();
    cfg.h = j.at("h").get<int>();
    cfg.I = j.at("I").get<int>();
    cfg.d_key = j.at("d_key").get<int>();
    cfg.d_ff = j.at("d_ff").get<int>();
    cfg.N = j.at("N").get<int>();
    cfg.J = j.at("J").get<int>();
    cfg.beta = j.at("beta").get<double>();
    cfg.K = j.at("K").get<int>();
    if (j.contains("d_model") && j.at("d_model").get<int>() != cfg.d_model())
        throw std::invalid_argument("config_from_json: d_model != h * I");
    if (j.contains("d_v") && j.at("d_v").get<int>() != cfg.d_v())
        throw std::invalid_argument("config_from_json: d_v != I");
    cfg.validate();
    return cfg;
}

json network_to_json(const ModelConfig& cfg, const NetworkParams& p) {
    check_shapes(p, cfg);
    json j;
    j["config"] = config_to_json(cfg);
    json layers = json::array();
    for (const auto& lp : p.layers) {
        json lj;
        json heads = json::array();
        for (const auto& hd : lp.heads) {
            json hj;
            hj["wq"] = matrix_to_json(hd.w_query);
            hj["wk"] = matrix_to_json(hd.w_key);
            hj["wv"] = matrix_to_json(hd.w_value);
            heads.push_back(std::move(hj));
        }
        lj["heads"] = std::move(heads);
        lj["ffn"] = {{"w1", matrix_to_json(lp.ffn.w1)},
                     {"b1", lp.ffn.b1},
                     {"w2", matrix_to_json(lp.ffn.w2)},
                     {"b2", lp.ffn.b2}};
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    j["final"] = {{"v1", p.final.v1}, {"v0_slope", p.final.v0_slope}, {"v0_bias", p.final.v0_bias}};
    return j;
}

NetworkParams network_from_json(const json& j, ModelConfig* cfg_out) {
    ModelConfig cfg = config_from_json(j.at("config"));
    NetworkParams p;
    for (const auto& lj : j.at("layers")) {
        LayerParams lp;
        for (const auto& hj : lj.at("heads"))
            lp.heads.push_back(
                {matrix_from_json(hj.at("wq")), matrix_from_json(hj.at("wk")), matrix_from_json(hj.at("wv"))});
        const auto& fj = lj.at("ffn");
        lp.ffn.w1 = matrix_from_json(fj.at("w1"));
        lp.ffn.b1 = fj.at("b1").get<std::vector<double>>();
        lp.ffn.w2 = matrix_from_json(fj.at("w2"));
        lp.ffn.b2 = fj.at("b2").get<std::vector<double>>();
        p.layers.push_back(std::move(lp));
    }
    const auto& fj = j.at("final");
    p.final.v1 = fj.at("v1").get<std::vector<double>>();
    p.final.v0_slope = fj.at("v0_slope").get<std::vector<double>>();
    p.final.v0_bias = fj.at("v0_bias").get<std::vector<double>>();
    check_shapes(p, cfg);
    if (cfg_out) *cfg_out = cfg;
    return p;
}

json mask_to_json(const NetworkMask& m) {
    json layers = json::array();
    for (const auto& lm : m.layers) {
        json lj;
        json heads = json::array();
        for (const auto& hm : lm.heads)
            heads.push_back({{"q", packed_bits(hm.q)}, {"k", packed_bits(hm.k)}, {"v", packed_bits(hm.v)}});
        lj["heads"] = std::move(heads);
        lj["w1"] = packed_bits(lm.w1);
        lj["w2"] = packed_bits(lm.w2);
        layers.push_back(std::move(lj));
    }
    return json{{"layers", std::move(layers)}};
}

NetworkMask mask_from_json(const json& j) {
    NetworkMask m;
    for (const auto& lj : j.at("layers")) {
        LayerMask lm;
        for (const auto& hj : lj.at("heads"))
            lm.heads.push_back({unpack_bits(hj.at("q")), unpack_bits(hj.at("k")), unpack_bits(hj.at("v"))});
        lm.w1 = unpack_bits(lj.at("w1"));
        lm.w2 = unpack_bits(lj.at("w2"));
        m.layers.push_back(std::move(lm));
    }
    return m;
}

std::string write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
    return path;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace hmtc
