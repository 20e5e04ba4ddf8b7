#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "drgnn/datagen.hpp"
#include "drgnn/error.hpp"
#include "drgnn/io.hpp"
#include "drgnn/robust.hpp"

// Flat "key = value" configuration shared by every subcommand.

namespace drgnn {

/// Every key a configuration file may contain.
inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys{
        // dataset
        "graph_kind", "n_nodes", "graph_param", "n_samples", "n_features", "noise_sigma", "observed_fraction",
        "fixed_mask", "train_fraction", "seed",
        // model
        "n_layers", "k_taps", "hidden_features",
        // training (RobustConfig)
        "rho", "gamma_init", "gamma_floor", "ascent_steps", "ascent_step_size", "learning_rate", "batch_size",
        "epochs", "loss_kind", "huber_delta", "lambda_reg", "threads",
        // attack
        "gamma_attack", "attack_steps"};
    return keys;
}

class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text, const std::string& origin = "config") {
        KeyValueConfig cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto body = io::detail::trim(line);
            if (body.empty() || body.front() == '#') continue;
            const auto where = origin + ":" + std::to_string(line_no);
            const auto eq = body.find('=');
            if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
            const auto key = io::detail::trim(body.substr(0, eq));
            const auto value = io::detail::trim(body.substr(eq + 1));
            if (key.empty() || value.empty()) throw ConfigError(where + ": empty key or value");
            if (!known_config_keys().count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
            if (!cfg.values_.emplace(key, value).second) throw ConfigError(where + ": duplicate key '" + key + "'");
        }
        return cfg;
    }

    static KeyValueConfig load(const std::filesystem::path& path) {
        std::string text;
        try {
            text = io::read_text(path);
        } catch (const IoError& e) {
            throw ConfigError(e.what());
        }
        return parse(text, path.string());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) {
        if (!known_config_keys().count(key)) throw ConfigError("unknown key '" + key + "'");
        values_[key] = value;
    }

    void require(std::initializer_list<const char*> keys) const {
        for (const auto* k : keys)
            if (!has(k)) throw ConfigError(origin_ + ": missing required key '" + std::string(k) + "'");
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto v = get_optional_double(key);
        return v ? *v : fallback;
    }

    std::optional<double> get_optional_double(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' is not a number: '" + it->second + "'");
        }
    }

    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::uint64_t v = 0;
        const auto& s = it->second;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size())
            throw ConfigError(origin_ + ": key '" + key + "' is not a nonnegative integer: '" + s + "'");
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: '" + it->second + "'");
    }

    const std::string& origin() const { return origin_; }

private:
    std::string origin_;
    std::map<std::string, std::string> values_;
};

inline DatagenConfig datagen_config(const KeyValueConfig& kv) {
    kv.require({"graph_kind", "n_nodes", "n_samples", "n_features", "seed"});
    DatagenConfig c;
    try {
        c.graph_kind = graph_kind_from_string(kv.get_string("graph_kind", "grid2d"));
    } catch (const InvalidArgument& e) {
        throw ConfigError(kv.origin() + ": " + e.what());
    }
    c.n_nodes = kv.get_uint("n_nodes", c.n_nodes);
    c.graph_param = kv.get_double("graph_param", c.graph_param);
    c.samples.n_samples = kv.get_uint("n_samples", c.samples.n_samples);
    c.samples.n_features = kv.get_uint("n_features", c.samples.n_features);
    c.samples.noise_sigma = kv.get_double("noise_sigma", c.samples.noise_sigma);
    c.samples.observed_fraction = kv.get_double("observed_fraction", c.samples.observed_fraction);
    c.samples.fixed_mask = kv.get_bool("fixed_mask", c.samples.fixed_mask);
    c.train_fraction = kv.get_double("train_fraction", c.train_fraction);
    c.seed = kv.get_uint("seed", c.seed);
    if (c.n_nodes < 2 || c.samples.n_samples < 2 || c.samples.n_features < 1)
        throw ConfigError(kv.origin() + ": n_nodes >= 2, n_samples >= 2 and n_features >= 1 required");
    if (!(c.samples.observed_fraction > 0.0 && c.samples.observed_fraction <= 1.0))
        throw ConfigError(kv.origin() + ": observed_fraction must be in (0, 1]");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
        throw ConfigError(kv.origin() + ": train_fraction must be in (0, 1)");
    if (c.samples.noise_sigma < 0.0) throw ConfigError(kv.origin() + ": noise_sigma must be >= 0");
    return c;
}

inline RobustConfig robust_config(const KeyValueConfig& kv) {
    RobustConfig c;
    c.rho = kv.get_double("rho", c.rho);
    c.gamma_init = kv.get_optional_double("gamma_init");
    c.gamma_floor = kv.get_optional_double("gamma_floor");
    c.ascent_steps = kv.get_uint("ascent_steps", c.ascent_steps);
    c.ascent_step_size = kv.get_double("ascent_step_size", c.ascent_step_size);
    c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
    c.batch_size = kv.get_uint("batch_size", c.batch_size);
    c.epochs = kv.get_uint("epochs", c.epochs);
    try {
        c.loss_spec.kind = loss_kind_from_string(kv.get_string("loss_kind", "huber"));
    } catch (const InvalidArgument& e) {
        throw ConfigError(kv.origin() + ": " + e.what());
    }
    c.loss_spec.huber_delta = kv.get_double("huber_delta", c.loss_spec.huber_delta);
    c.loss_spec.lambda_reg = kv.get_double("lambda_reg", c.loss_spec.lambda_reg);
    c.seed = kv.get_uint("seed", c.seed);
    c.threads = kv.get_uint("threads", c.threads);
    validate(c);
    return c;
}

struct ModelShape {
    std::size_t n_layers = 2;
    std::size_t k_taps = 2;
    std::size_t hidden_features = 8;
};

inline ModelShape model_shape(const KeyValueConfig& kv) {
    ModelShape m;
    m.n_layers = kv.get_uint("n_layers", m.n_layers);
    m.k_taps = kv.get_uint("k_taps", m.k_taps);
    m.hidden_features = kv.get_uint("hidden_features", m.hidden_features);
    if (m.n_layers < 1 || m.k_taps < 1 || m.hidden_features < 1)
        throw ConfigError(kv.origin() + ": n_layers, k_taps and hidden_features must be >= 1");
    return m;
}

} // namespace drgnn
