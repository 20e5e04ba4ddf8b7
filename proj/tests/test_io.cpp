#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "drgnn/config.hpp"
#include "drgnn/io.hpp"
#include "drgnn/verify.hpp"

using namespace drgnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("drgnn_io_" + name);
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST(FormatDouble, RoundTripsExactly) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal(0.0, 1e3);
    for (int i = 0; i < 1000; ++i) {
        const double v = normal(rng);
        EXPECT_EQ(std::stod(io::format_double(v)), v);
    }
    EXPECT_THROW(io::format_double(std::numeric_limits<double>::quiet_NaN()), NumericalFailure);
}

TEST(EdgeList, RoundTrip) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 10; ++t) {
        const auto g = verify::random_graph(2 + t, rng);
        EXPECT_EQ(io::parse_edge_list(io::format_edge_list(g)), g);
    }
}

TEST(EdgeList, CommentsAndWhitespace) {
    const auto g = io::parse_edge_list("# tiny graph\nN 3\n0 1 0.5   \n\n# second edge\n1 2 2\n");
    EXPECT_EQ(g, from_edge_list(3, {{0, 1, 0.5}, {1, 2, 2.0}}));
}

TEST(EdgeList, Errors) {
    EXPECT_THROW(io::parse_edge_list("0 1 1\n"), IoError);
    EXPECT_THROW(io::parse_edge_list("N 2\n0 1\n"), IoError);
    EXPECT_THROW(io::parse_edge_list("N 2\n0 1 1 7\n"), IoError);
    EXPECT_THROW(io::parse_edge_list("N 2\n0 5 1\n"), InvalidArgument);
    EXPECT_THROW(io::parse_edge_list("N 2\n0 1 1\n1 0 1\n"), InvalidArgument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto model = init_model(make_layer_specs(2, 3, 2, 5, 1), 11);
    const io::CheckpointMeta meta{42, 7};
    const auto text = io::format_checkpoint(model, meta);
    const auto ck = io::parse_checkpoint(text);
    EXPECT_EQ(ck.model, model);
    EXPECT_EQ(ck.meta.seed, 42u);
    EXPECT_EQ(ck.meta.trained_epochs, 7u);
    EXPECT_EQ(io::format_checkpoint(ck.model, ck.meta), text);
}

TEST(Checkpoint, Schema) {
    const auto model = init_model({{2, 1, 2, Activation::relu}, {1, 2, 1, Activation::identity}}, 1);
    const auto j = io::parse_json(io::format_checkpoint(model, {}), "test");
    ASSERT_EQ(j.at("layers").size(), 2u);
    const auto& l0 = j.at("layers")[0];
    EXPECT_EQ(l0.at("k_taps"), 2);
    EXPECT_EQ(l0.at("in"), 1);
    EXPECT_EQ(l0.at("out"), 2);
    EXPECT_EQ(l0.at("activation"), "relu");
    EXPECT_EQ(l0.at("coefficients").size(), 2u);
    EXPECT_EQ(l0.at("coefficients")[0].size(), 2u);
    EXPECT_TRUE(j.at("meta").contains("seed"));
    EXPECT_TRUE(j.at("meta").contains("trained_epochs"));
}

TEST(Checkpoint, Errors) {
    EXPECT_THROW(io::parse_checkpoint("{"), IoError);
    EXPECT_THROW(io::parse_checkpoint("{\"meta\":{}}"), IoError);
    EXPECT_THROW(io::parse_checkpoint(R"({"layers":[{"k_taps":2,"in":1,"out":1,"activation":"identity",
        "coefficients":[[1.0]]}],"meta":{"seed":0,"trained_epochs":0}})"),
                 IoError);
    EXPECT_THROW(io::parse_checkpoint(R"({"layers":[{"k_taps":1,"in":1,"out":1,"activation":"tanh",
        "coefficients":[[1.0]]}],"meta":{"seed":0,"trained_epochs":0}})"),
                 std::exception);
}

TEST(Samples, RoundTrip) {
    std::mt19937_64 rng(3);
    std::vector<Sample> samples;
    for (int i = 0; i < 5; ++i) {
        auto s = verify::random_sample(verify::random_signal(4, 3, rng), rng);
        s.observed[static_cast<std::size_t>(i % 4)] = false;
        samples.push_back(s);
    }
    EXPECT_EQ(io::parse_samples(io::format_samples(samples)), samples);
    EXPECT_THROW(io::parse_samples(R"({"samples":[{"features":[1,2,3],"labels":[1,2],"observed":[true,true]}]})"), IoError);
}

TEST(Dataset, SaveAndLoad) {
    DatagenConfig cfg;
    cfg.n_nodes = 9;
    cfg.samples.n_samples = 10;
    cfg.seed = 4;
    const auto d = generate_dataset(cfg);
    const auto dir = scratch("dataset");
    io::save_dataset(dir, d, cfg);
    for (const char* f : {"manifest.json", "graph.txt", "samples.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
    const auto loaded = io::load_dataset(dir);
    EXPECT_EQ(loaded.data.graph, d.graph);
    EXPECT_EQ(loaded.data.samples, d.samples);
    EXPECT_EQ(loaded.data.split.train, d.split.train);
    EXPECT_EQ(loaded.data.split.test, d.split.test);
    EXPECT_EQ(loaded.manifest.n_features, 2u);
    fs::remove_all(dir);
}

TEST(Dataset, ManifestRejectsBadSplit) {
    io::DatasetManifest m;
    m.n_samples = 3;
    m.n_nodes = 4;
    m.n_features = 1;
    m.train_indices = {0, 1};
    m.test_indices = {1};
    EXPECT_THROW(io::manifest_from_json(io::to_json(m), "m"), IoError);
    m.test_indices = {2};
    EXPECT_NO_THROW(io::manifest_from_json(io::to_json(m), "m"));
}

TEST(Io, MissingFile) { EXPECT_THROW(io::read_text("/nonexistent/drgnn/file"), IoError); }

TEST(KeyValueConfig, ParsesCommentsAndSpaces) {
    const auto kv = KeyValueConfig::parse("# comment\n  rho = 2.5 \nepochs=3\n\nloss_kind = squared\n");
    const auto cfg = robust_config(kv);
    EXPECT_EQ(cfg.rho, 2.5);
    EXPECT_EQ(cfg.epochs, 3u);
    EXPECT_EQ(cfg.loss_spec.kind, LossKind::squared);
    EXPECT_FALSE(cfg.gamma_floor.has_value());
}

TEST(KeyValueConfig, Errors) {
    EXPECT_THROW(KeyValueConfig::parse("colour = blue\n"), ConfigError);
    EXPECT_THROW(KeyValueConfig::parse("rho = 1\nrho = 2\n"), ConfigError);
    EXPECT_THROW(KeyValueConfig::parse("rho\n"), ConfigError);
    EXPECT_THROW(KeyValueConfig::parse("rho =\n"), ConfigError);
    EXPECT_THROW(robust_config(KeyValueConfig::parse("rho = ten\n")), ConfigError);
    EXPECT_THROW(robust_config(KeyValueConfig::parse("epochs = -1\n")), ConfigError);
    EXPECT_THROW(robust_config(KeyValueConfig::parse("loss_kind = l1\n")), ConfigError);
    EXPECT_THROW(robust_config(KeyValueConfig::parse("gamma_floor = 2\ngamma_init = 1\n")), ConfigError);
    EXPECT_THROW(datagen_config(KeyValueConfig::parse("graph_kind = grid2d\nn_nodes = 9\nseed = 1\n")),
                 ConfigError);
    EXPECT_THROW(datagen_config(KeyValueConfig::parse(
                     "graph_kind = ring\nn_nodes = 9\nn_samples = 4\nn_features = 1\nseed = 1\n")),
                 ConfigError);
    EXPECT_THROW(model_shape(KeyValueConfig::parse("k_taps = 0\n")), ConfigError);
    EXPECT_THROW(KeyValueConfig::load("/nonexistent/drgnn.cfg"), ConfigError);
}

TEST(KeyValueConfig, DatagenValues) {
    const auto cfg = datagen_config(KeyValueConfig::parse(
        "graph_kind = geometric\nn_nodes = 30\ngraph_param = 0.4\nn_samples = 50\nn_features = 3\n"
        "observed_fraction = 0.25\nfixed_mask = true\nseed = 9\n"));
    EXPECT_EQ(cfg.graph_kind, GraphKind::geometric);
    EXPECT_EQ(cfg.n_nodes, 30u);
    EXPECT_EQ(cfg.samples.n_features, 3u);
    EXPECT_TRUE(cfg.samples.fixed_mask);
    EXPECT_EQ(cfg.samples.observed_fraction, 0.25);
    EXPECT_EQ(cfg.seed, 9u);
}
