#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drgnn/datagen.hpp"
#include "drgnn/error.hpp"
#include "drgnn/graph.hpp"
#include "drgnn/loss.hpp"
#include "drgnn/nn.hpp"

namespace drgnn::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// Shortest form is not used: every float is written with 17 significant
/// digits so text files round-trip bit-exactly.
inline std::string format_double(double v) {
    if (!std::isfinite(v)) throw NumericalFailure("cannot serialize non-finite value");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline json parse_json(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(origin + ": " + e.what());
    }
}

namespace detail {

inline void append_array(std::string& out, const double* data, std::size_t n) {
    out += '[';
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ',';
        out += format_double(data[i]);
    }
    out += ']';
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& origin) {
    if (!j.contains(key)) throw IoError(origin + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw IoError(origin + ": field '" + key + "': " + e.what());
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Edge list: "N <n>" then "u v w" per edge; '#' starts a comment line.

inline std::string format_edge_list(const Graph& g) {
    std::string out = "N " + std::to_string(g.n_nodes()) + "\n";
    for (const auto& e : g.edges())
        out += std::to_string(e.u) + " " + std::to_string(e.v) + " " + format_double(e.weight) + "\n";
    return out;
}

inline Graph parse_edge_list(const std::string& text, const std::string& origin = "edge list") {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0, n_nodes = 0;
    bool have_header = false;
    std::vector<Edge> edges;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        std::istringstream fields(body);
        const auto where = origin + ":" + std::to_string(line_no);
        if (!have_header) {
            std::string tag;
            long long n = -1;
            if (!(fields >> tag >> n) || tag != "N" || n <= 0)
                throw IoError(where + ": expected header 'N <n_nodes>'");
            n_nodes = static_cast<std::size_t>(n);
            have_header = true;
        } else {
            long long u = -1, v = -1;
            double w = 0.0;
            if (!(fields >> u >> v >> w) || u < 0 || v < 0) throw IoError(where + ": expected 'u v w'");
            edges.push_back({static_cast<std::size_t>(u), static_cast<std::size_t>(v), w});
        }
        std::string extra;
        if (fields >> extra) throw IoError(where + ": unexpected trailing field '" + extra + "'");
    }
    if (!have_header) throw IoError(origin + ": missing 'N <n_nodes>' header");
    return from_edge_list(n_nodes, edges);
}

inline void save_graph(const fs::path& path, const Graph& g) { write_text(path, format_edge_list(g)); }

inline Graph load_graph(const fs::path& path) { return parse_edge_list(read_text(path), path.string()); }

// ---------------------------------------------------------------------------
// Checkpoint

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::size_t trained_epochs = 0;
};

struct Checkpoint {
    GnnModel model;
    CheckpointMeta meta;
};

inline std::string format_checkpoint(const GnnModel& model, const CheckpointMeta& meta) {
    drgnn::detail::check_model(model);
    std::string out = "{\"layers\":[";
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& s = model.layers[l];
        if (l) out += ',';
        out += "{\"k_taps\":" + std::to_string(s.k_taps) + ",\"in\":" + std::to_string(s.in_features) +
               ",\"out\":" + std::to_string(s.out_features) + ",\"activation\":\"" + to_string(s.activation) +
               "\",\"coefficients\":[";
        for (std::size_t k = 0; k < s.k_taps; ++k) {
            if (k) out += ',';
            const auto& h = model.coefficients[l][k];
            detail::append_array(out, h.data(), static_cast<std::size_t>(h.size()));
        }
        out += "]}";
    }
    out += "],\"meta\":{\"seed\":" + std::to_string(meta.seed) +
           ",\"trained_epochs\":" + std::to_string(meta.trained_epochs) + "}}\n";
    return out;
}

inline Checkpoint parse_checkpoint(const std::string& text, const std::string& origin = "checkpoint") {
    const auto j = parse_json(text, origin);
    Checkpoint ck;
    try {
        for (const auto& jl : j.at("layers")) {
            LayerSpec s;
            s.k_taps = jl.at("k_taps").get<std::size_t>();
            s.in_features = jl.at("in").get<std::size_t>();
            s.out_features = jl.at("out").get<std::size_t>();
            s.activation = activation_from_string(jl.at("activation").get<std::string>());
            const auto& taps = jl.at("coefficients");
            if (taps.size() != s.k_taps) throw IoError(origin + ": tap count does not match k_taps");
            std::vector<Matrix> layer;
            for (const auto& jt : taps) {
                const auto values = jt.get<std::vector<double>>();
                if (values.size() != s.in_features * s.out_features)
                    throw IoError(origin + ": coefficient array has wrong length");
                Matrix h(s.in_features, s.out_features);
                std::copy(values.begin(), values.end(), h.data());
                layer.push_back(std::move(h));
            }
            ck.model.layers.push_back(s);
            ck.model.coefficients.push_back(std::move(layer));
        }
        ck.meta.seed = j.at("meta").at("seed").get<std::uint64_t>();
        ck.meta.trained_epochs = j.at("meta").at("trained_epochs").get<std::size_t>();
    } catch (const json::exception& e) {
        throw IoError(origin + ": " + e.what());
    }
    drgnn::detail::check_model(ck.model);
    return ck;
}

inline void save_checkpoint(const fs::path& path, const GnnModel& model, const CheckpointMeta& meta) {
    write_text(path, format_checkpoint(model, meta));
}

inline Checkpoint load_checkpoint(const fs::path& path) { return parse_checkpoint(read_text(path), path.string()); }

// ---------------------------------------------------------------------------
// Samples: {"samples":[{"features":[row-major],"labels":[...],"observed":[...]}]}

inline std::string format_samples(const std::vector<Sample>& samples) {
    std::string out = "{\"samples\":[";
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto& x = samples[s];
        if (s) out += ',';
        out += "{\"features\":";
        detail::append_array(out, x.features.data(), static_cast<std::size_t>(x.features.size()));
        out += ",\"labels\":";
        detail::append_array(out, x.labels.data(), static_cast<std::size_t>(x.labels.size()));
        out += ",\"observed\":[";
        for (std::size_t i = 0; i < x.observed.size(); ++i) {
            if (i) out += ',';
            out += x.observed[i] ? "true" : "false";
        }
        out += "]}";
    }
    out += "]}\n";
    return out;
}

inline std::vector<Sample> parse_samples(const std::string& text, const std::string& origin = "samples") {
    const auto j = parse_json(text, origin);
    std::vector<Sample> out;
    try {
        for (const auto& js : j.at("samples")) {
            const auto features = js.at("features").get<std::vector<double>>();
            const auto labels = js.at("labels").get<std::vector<double>>();
            const auto observed = js.at("observed").get<std::vector<bool>>();
            const std::size_t n = labels.size();
            if (n == 0 || observed.size() != n || features.size() % n != 0 || features.empty())
                throw IoError(origin + ": sample " + std::to_string(out.size()) + " has inconsistent lengths");
            Sample s;
            s.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(features.size() / n));
            std::copy(features.begin(), features.end(), s.features.data());
            s.labels = Eigen::Map<const Vector>(labels.data(), static_cast<Eigen::Index>(n));
            s.observed = observed;
            out.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw IoError(origin + ": " + e.what());
    }
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].features.rows() != out[0].features.rows() || out[i].features.cols() != out[0].features.cols())
            throw IoError(origin + ": samples disagree in shape");
    return out;
}

inline void save_samples(const fs::path& path, const std::vector<Sample>& samples) {
    write_text(path, format_samples(samples));
}

inline std::vector<Sample> load_samples(const fs::path& path) { return parse_samples(read_text(path), path.string()); }

// ---------------------------------------------------------------------------
// Dataset manifest

struct DatasetManifest {
    std::size_t n_nodes = 0;
    std::size_t n_features = 0;
    std::size_t n_samples = 0;
    double observed_fraction = 1.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    std::string graph_kind;
    double graph_param = 0.0;
    bool fixed_mask = false;
    std::string graph_file = "graph.txt";
    std::string samples_file = "samples.json";
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

inline json to_json(const DatasetManifest& m) {
    return json{{"n_nodes", m.n_nodes},
                {"n_features", m.n_features},
                {"n_samples", m.n_samples},
                {"observed_fraction", m.observed_fraction},
                {"noise_sigma", m.noise_sigma},
                {"seed", m.seed},
                {"graph_kind", m.graph_kind},
                {"graph_param", m.graph_param},
                {"fixed_mask", m.fixed_mask},
                {"graph_file", m.graph_file},
                {"samples_file", m.samples_file},
                {"train_indices", m.train_indices},
                {"test_indices", m.test_indices}};
}

inline DatasetManifest manifest_from_json(const json& j, const std::string& origin) {
    DatasetManifest m;
    m.n_nodes = detail::get_field<std::size_t>(j, "n_nodes", origin);
    m.n_features = detail::get_field<std::size_t>(j, "n_features", origin);
    m.n_samples = detail::get_field<std::size_t>(j, "n_samples", origin);
    m.observed_fraction = detail::get_field<double>(j, "observed_fraction", origin);
    m.noise_sigma = detail::get_field<double>(j, "noise_sigma", origin);
    m.seed = detail::get_field<std::uint64_t>(j, "seed", origin);
    m.graph_kind = j.value("graph_kind", std::string{});
    m.graph_param = j.value("graph_param", 0.0);
    m.fixed_mask = j.value("fixed_mask", false);
    m.graph_file = detail::get_field<std::string>(j, "graph_file", origin);
    m.samples_file = detail::get_field<std::string>(j, "samples_file", origin);
    m.train_indices = detail::get_field<std::vector<std::size_t>>(j, "train_indices", origin);
    m.test_indices = detail::get_field<std::vector<std::size_t>>(j, "test_indices", origin);

    std::vector<bool> seen(m.n_samples, false);
    for (const auto* part : {&m.train_indices, &m.test_indices})
        for (auto i : *part) {
            if (i >= m.n_samples || seen[i]) throw IoError(origin + ": split indices overlap or are out of range");
            seen[i] = true;
        }
    if (m.train_indices.size() + m.test_indices.size() != m.n_samples)
        throw IoError(origin + ": split does not cover every sample");
    return m;
}

inline constexpr const char* manifest_file = "manifest.json";

/// Writes manifest.json, graph.txt and samples.json into `dir`.
inline DatasetManifest save_dataset(const fs::path& dir, const Dataset& d, const DatagenConfig& cfg) {
    DatasetManifest m;
    m.n_nodes = d.graph.n_nodes();
    m.n_features = cfg.samples.n_features;
    m.n_samples = d.samples.size();
    m.observed_fraction = cfg.samples.observed_fraction;
    m.noise_sigma = cfg.samples.noise_sigma;
    m.seed = cfg.seed;
    m.graph_kind = to_string(cfg.graph_kind);
    m.graph_param = cfg.graph_param;
    m.fixed_mask = cfg.samples.fixed_mask;
    m.train_indices = d.split.train;
    m.test_indices = d.split.test;
    save_graph(dir / m.graph_file, d.graph);
    save_samples(dir / m.samples_file, d.samples);
    write_text(dir / manifest_file, to_json(m).dump(2) + "\n");
    return m;
}

struct LoadedDataset {
    DatasetManifest manifest;
    Dataset data;
};

/// Loads a dataset directory. Works for externally produced files as long as
/// they follow the same schema.
inline LoadedDataset load_dataset(const fs::path& dir) {
    const auto origin = (dir / manifest_file).string();
    LoadedDataset out;
    out.manifest = manifest_from_json(parse_json(read_text(dir / manifest_file), origin), origin);
    out.data.graph = load_graph(dir / out.manifest.graph_file);
    out.data.samples = load_samples(dir / out.manifest.samples_file);
    out.data.split = {out.manifest.train_indices, out.manifest.test_indices};
    if (out.data.samples.size() != out.manifest.n_samples)
        throw IoError(origin + ": sample count differs from manifest");
    for (const auto& s : out.data.samples) {
        if (s.n_nodes() != out.data.graph.n_nodes()) throw IoError(origin + ": samples do not match graph size");
        if (static_cast<std::size_t>(s.features.cols()) != out.manifest.n_features)
            throw IoError(origin + ": feature count differs from manifest");
    }
    return out;
}

} // namespace drgnn::io
