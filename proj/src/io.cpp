#include "ncdl/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace ncdl {

namespace {

using nlohmann::json;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ofstream& out, T value) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
    write_bytes(out, buf, sizeof(T));
}

void write_f64_le(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    write_le(out, bits);
}

template <typename T>
T read_le(std::ifstream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw ArgumentError("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

double read_f64_le(std::ifstream& in) {
    const std::uint64_t bits = read_le<std::uint64_t>(in);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

constexpr char kMagic[4] = {'N', 'C', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const NamedMatrices& matrices) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("checkpoint: cannot open " + path.string());
    write_bytes(out, kMagic, 4);
    write_le<std::uint32_t>(out, kVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(matrices.size()));
    for (const auto& [name, m] : matrices) {
        if (name.size() > 0xffff) throw ArgumentError("checkpoint: name too long");
        write_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        write_bytes(out, name.data(), name.size());
        write_le<std::uint64_t>(out, m.rows());
        write_le<std::uint64_t>(out, m.cols());
        for (double v : m.values()) write_f64_le(out, v);
    }
    if (!out) throw ArgumentError("checkpoint: write failed for " + path.string());
}

NamedMatrices read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw ArgumentError("checkpoint: bad magic");
    const auto version = read_le<std::uint32_t>(in);
    if (version != kVersion)
        throw ArgumentError("checkpoint: unsupported version " + std::to_string(version));
    const auto count = read_le<std::uint32_t>(in);

    NamedMatrices out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_le<std::uint16_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw ArgumentError("checkpoint: truncated name");
        const auto rows = read_le<std::uint64_t>(in);
        const auto cols = read_le<std::uint64_t>(in);
        std::vector<double> data(rows * cols);
        for (double& v : data) v = read_f64_le(in);
        out.emplace_back(std::move(name),
                         Matrix(static_cast<std::size_t>(rows),
                                static_cast<std::size_t>(cols), std::move(data)));
    }
    return out;
}

NamedMatrices state_to_named(const NetworkState& state) {
    NamedMatrices out;
    for (std::size_t m = 0; m < state.weights.size(); ++m)
        out.emplace_back("W" + std::to_string(m + 1), state.weights[m]);
    out.emplace_back("H1", state.features);
    if (state.bias) {
        Matrix b(state.bias->size(), 1);
        for (std::size_t k = 0; k < state.bias->size(); ++k) b(k, 0) = (*state.bias)[k];
        out.emplace_back("b", std::move(b));
    }
    return out;
}

NetworkState state_from_named(const NamedMatrices& matrices, const ProblemSpec& spec) {
    auto find = [&](const std::string& name) -> const Matrix* {
        for (const auto& [n, m] : matrices)
            if (n == name) return &m;
        return nullptr;
    };

    NetworkState state;
    for (std::size_t m = 1; m <= spec.depth(); ++m) {
        const Matrix* w = find("W" + std::to_string(m));
        if (!w) throw ArgumentError("checkpoint: missing matrix W" + std::to_string(m));
        state.weights.push_back(*w);
    }
    const Matrix* h = find("H1");
    if (!h) throw ArgumentError("checkpoint: missing matrix H1");
    state.features = *h;
    if (spec.has_bias()) {
        const Matrix* b = find("b");
        if (!b) throw ArgumentError("checkpoint: missing matrix b");
        if (b->cols() != 1 || b->rows() != spec.num_classes)
            throw ArgumentError("checkpoint: bias must be K x 1");
        std::vector<double> bias(spec.num_classes);
        for (std::size_t k = 0; k < spec.num_classes; ++k) bias[k] = (*b)(k, 0);
        state.bias = std::move(bias);
    }
    return state;
}

namespace {

[[noreturn]] void reject(const std::string& path, const std::string& what) {
    throw ArgumentError("config: " + path + ": " + what);
}

void require_keys(const json& obj, const std::string& path,
                  std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) reject(path + "." + key, "unknown key");
    }
}

const json& require(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) reject(path + "." + key, "missing");
    return obj.at(key);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ArgumentError(std::string("config: malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) reject("$", "expected an object");
    require_keys(doc, "$", {"problem", "train", "outputs"});

    RunConfig cfg;

    const json& prob = require(doc, "$", "problem");
    require_keys(prob, "$.problem",
                 {"K", "class_counts", "widths", "loss", "bias", "lambdas"});
    cfg.problem.num_classes = require(prob, "$.problem", "K").get<std::size_t>();
    cfg.problem.class_counts =
        require(prob, "$.problem", "class_counts").get<std::vector<std::size_t>>();
    cfg.problem.widths = require(prob, "$.problem", "widths").get<std::vector<std::size_t>>();

    const std::string loss = require(prob, "$.problem", "loss").get<std::string>();
    if (loss == "mse")
        cfg.problem.loss = LossKind::Mse;
    else if (loss == "ce")
        cfg.problem.loss = LossKind::CrossEntropy;
    else
        reject("$.problem.loss", "expected \"mse\" or \"ce\"");

    const std::string bias = require(prob, "$.problem", "bias").get<std::string>();
    if (bias == "none")
        cfg.problem.bias_mode = BiasMode::None;
    else if (bias == "last_unreg")
        cfg.problem.bias_mode = BiasMode::LastLayerUnregularized;
    else if (bias == "last_reg")
        cfg.problem.bias_mode = BiasMode::LastLayerRegularized;
    else
        reject("$.problem.bias", "expected \"none\", \"last_unreg\" or \"last_reg\"");

    const json& lam = require(prob, "$.problem", "lambdas");
    require_keys(lam, "$.problem.lambdas", {"w", "h", "b"});
    cfg.problem.lambda_w = require(lam, "$.problem.lambdas", "w").get<std::vector<double>>();
    cfg.problem.lambda_h = require(lam, "$.problem.lambdas", "h").get<double>();
    if (lam.contains("b")) cfg.problem.lambda_b = lam.at("b").get<double>();

    const json& train = require(doc, "$", "train");
    require_keys(train, "$.train",
                 {"lr", "iterations", "lr_decay", "record_stride", "grad_tol", "seed"});
    cfg.train.lr = require(train, "$.train", "lr").get<double>();
    cfg.train.iterations = require(train, "$.train", "iterations").get<std::size_t>();
    cfg.train.record_stride = require(train, "$.train", "record_stride").get<std::size_t>();
    cfg.train.seed = require(train, "$.train", "seed").get<std::uint64_t>();
    if (train.contains("lr_decay")) {
        const json& decay = train.at("lr_decay");
        require_keys(decay, "$.train.lr_decay", {"factor", "every_n"});
        LrDecay d;
        d.factor = require(decay, "$.train.lr_decay", "factor").get<double>();
        d.every_n = require(decay, "$.train.lr_decay", "every_n").get<std::size_t>();
        cfg.train.lr_decay = d;
    }
    if (train.contains("grad_tol")) {
        if (train.at("grad_tol").is_null())
            cfg.train.grad_tol.reset();
        else
            cfg.train.grad_tol = train.at("grad_tol").get<double>();
    }

    const json& outputs = require(doc, "$", "outputs");
    require_keys(outputs, "$.outputs", {"dir"});
    cfg.output_dir = require(outputs, "$.outputs", "dir").get<std::string>();

    try {
        cfg.problem.validate();
        cfg.train.validate();
    } catch (const ArgumentError& e) {
        throw ArgumentError(std::string("config: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* geometry_name(Geometry g) {
    switch (g) {
        case Geometry::OrthogonalFrame: return "OF";
        case Geometry::SimplexEtf: return "ETF";
        case Geometry::GeneralOrthogonalFrame: return "GOF";
        case Geometry::Zero: return "Zero";
    }
    return "?";
}

const char* regime_name(RegimeKind r) {
    switch (r) {
        case RegimeKind::AllActive: return "nontrivial";
        case RegimeKind::PartialCollapse: return "partial_collapse";
        case RegimeKind::FullCollapse: return "full_collapse";
        case RegimeKind::ThresholdTie: return "threshold_tie";
    }
    return "?";
}

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

std::string prediction_to_json(const TheoryPrediction& p) {
    json doc;
    doc["regime"] = regime_name(p.regime);
    doc["geometry"] = geometry_name(p.geometry);
    doc["rank_cap"] = p.rank_cap;
    doc["active_count"] = p.active_count;
    doc["a"] = p.a_value;
    doc["threshold"] = p.threshold;
    doc["product_coefficient"] = p.product_coefficient;
    doc["singular_values"] = p.singular_values;
    doc["predicted_loss"] = finite_or_null(p.predicted_loss);
    doc["duality_coefficients"] = p.duality_coefficients;
    doc["target_product_gram"] = matrix_to_json(p.target_product_gram);
    doc["target_class_mean_gram"] = matrix_to_json(p.target_class_mean_gram);
    doc["target_alignment"] = matrix_to_json(p.target_alignment);
    if (p.bias) doc["bias"] = *p.bias;
    if (p.bias_constant_direction) doc["bias_constant_direction"] = true;
    if (p.tie_block) {
        doc["tie_block"] = {{"first", p.tie_block->first},
                            {"last", p.tie_block->last},
                            {"rank", p.tie_block->rank}};
    }
    if (!p.tie_indices.empty()) doc["tie_indices"] = p.tie_indices;
    return doc.dump(2);
}

std::string report_to_json(const MetricReport& r) {
    json doc;
    doc["flavor"] = geometry_name(r.flavor);
    doc["nc1"] = finite_or_null(r.nc1);
    doc["nc1_degenerate"] = r.nc1_degenerate;
    doc["nc2"] = r.nc2;
    doc["nc3"] = finite_or_null(r.nc3);
    doc["balance"] = r.balance;
    doc["loss_gap"] = finite_or_null(r.loss_gap);
    doc["class_mean_gap"] = finite_or_null(r.class_mean_gap);
    doc["sv_measured"] = r.sv_measured;
    doc["sv_predicted"] = r.sv_predicted;
    doc["duality_residuals"] = r.duality_residuals;
    doc["bias_gap"] = r.bias_gap;
    return doc.dump(2);
}

}  // namespace ncdl
