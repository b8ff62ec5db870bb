#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "eegdn/dataset.hpp"
#include "eegdn/model.hpp"
#include "eegdn/weights_io.hpp"

using namespace eegdn;
namespace fs = std::filesystem;

namespace {

std::string tmp(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "eegdn_test_model";
  fs::create_directories(dir);
  return (dir / name).string();
}

Tensor<float> random_input(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0, 1);
  Tensor<float> x(s);
  for (auto& v : x.data()) v = u(rng);
  return x;
}

void collect_residual_kernels(const std::vector<LayerSpec>& layers, std::vector<std::size_t>& out) {
  for (const auto& l : layers) {
    if (l.kind == LayerKind::residual_block) out.push_back(l.geometry.kernel[0]);
    for (const auto& b : l.branches) collect_residual_kernels(b, out);
  }
}

}  // namespace

TEST(ReferenceSpecs, AllValidateAndBuild) {
  for (const auto& n : reference_names()) {
    const auto spec = reference_spec(n);
    EXPECT_NO_THROW(validate_spec(spec)) << n;
    EXPECT_EQ(infer_output_shape(spec), (Shape{1, 800})) << n;
    Model<float> m(spec);
    EXPECT_EQ(m.parameter_count(), parameter_count(spec));
  }
}

// Counts worked out by hand from the layer lists: (out*in*k + out) per conv.
TEST(ReferenceSpecs, ParameterCounts) {
  auto conv = [](std::size_t i, std::size_t o, std::size_t k) { return o * i * k + o; };
  const std::size_t cnn = conv(1, 16, 5) + 2 * conv(16, 16, 5) + conv(16, 1, 5);
  const std::size_t res = conv(1, 16, 5) + 8 * conv(16, 16, 5) + conv(16, 1, 1);
  auto dae = [&](std::size_t in) {
    return conv(in, 32, 5) + conv(32, 64, 5) + conv(64, 64, 5) + conv(64, 64, 5) + conv(64, 32, 5) +
           conv(32, 16, 5) + conv(16, 1, 1);
  };
  const std::size_t e2car = conv(1, 16, 3) + 2 * (conv(16, 16, 3) + conv(16, 16, 5) + conv(16, 16, 7)) * 2 +
                            conv(48, 16, 1) + dae(16);
  EXPECT_EQ(parameter_count(reference_spec("cnn_ref")), cnn);
  EXPECT_EQ(parameter_count(reference_spec("resnet_ref")), res);
  EXPECT_EQ(parameter_count(reference_spec("dae_ref")), dae(1));
  EXPECT_EQ(parameter_count(reference_spec("e2car_ref")), e2car);
  EXPECT_EQ(cnn, 2769u);
  EXPECT_EQ(e2car, 83249u);
}

TEST(ReferenceSpecs, E2carHasSixResidualBlocks) {
  std::vector<std::size_t> ks;
  collect_residual_kernels(reference_spec("e2car_ref").layers, ks);
  std::sort(ks.begin(), ks.end());
  EXPECT_EQ(ks, (std::vector<std::size_t>{3, 3, 5, 5, 7, 7}));
}

TEST(ReferenceSpecs, DaeIsE2carWithoutFrontEnd) {
  const auto dae = reference_spec("dae_ref"), e2 = reference_spec("e2car_ref");
  EXPECT_EQ(dae.layers.size() + 3, e2.layers.size());
  EXPECT_EQ(e2.layers[1].kind, LayerKind::branch_concat);
  for (std::size_t i = 1; i < dae.layers.size(); ++i) {
    EXPECT_EQ(dae.layers[i].kind, e2.layers[i + 3].kind);
  }
}

TEST(ReferenceSpecs, UnknownNameListsKnownOnes) {
  try {
    (void)reference_spec("vgg");
    FAIL();
  } catch (const InputError& e) {
    const std::string msg = e.what();
    for (const auto& n : reference_names()) EXPECT_NE(msg.find(n), std::string::npos) << msg;
  }
}

TEST(ModelSpec, ChannelMismatchFailsAtThatLayer) {
  auto spec = reference_spec("e2car_ref");
  spec.layers[2] = LayerSpec::conv_same(16, 16, 1, ActivationKind::relu);  // expects 16, concat gives 48
  try {
    validate_spec(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("layers[2]"), std::string::npos) << e.what();
  }
}

TEST(ModelSpec, JsonRoundTrip) {
  for (const auto& n : reference_names()) {
    const auto spec = reference_spec(n, 99);
    const auto path = tmp(n + ".json");
    save_spec(spec, path);
    const auto back = load_spec(path);
    EXPECT_EQ(spec_to_json(back), spec_to_json(spec));
    EXPECT_EQ(back.seed, 99u);
  }
}

TEST(Model, ForwardShapeAndPurity) {
  std::mt19937_64 rng(1);
  for (const auto& n : reference_names()) {
    Model<float> m(reference_spec(n));
    const auto x = random_input({1, 800}, rng);
    const auto y1 = m.forward(x), y2 = m.forward(x);
    EXPECT_EQ(y1.shape(), (Shape{1, 800}));
    EXPECT_EQ(y1, y2);
  }
  Model<float> m(reference_spec("cnn_ref"));
  EXPECT_THROW(m.forward(Tensor<float>({1, 799})), ShapeError);
}

TEST(Model, SameSeedSameParameters) {
  for (const auto& n : reference_names()) {
    Model<float> a(reference_spec(n, 3)), b(reference_spec(n, 3)), c(reference_spec(n, 4));
    EXPECT_EQ(a.params(), b.params());
    EXPECT_FALSE(a.params() == c.params());
  }
}

TEST(Model, ZeroInputZeroBiasGivesZero) {
  for (const auto& n : reference_names()) {
    Model<double> m(reference_spec(n));
    const auto y = m.forward(Tensor<double>({1, 800}));
    for (double v : y.data()) ASSERT_EQ(v, 0.0) << n;
  }
}

TEST(Model, DaeOutputsFiniteOnRandomSegments) {
  std::mt19937_64 rng(2);
  Model<float> m(reference_spec("dae_ref"));
  for (int i = 0; i < 100; ++i) {
    const auto y = m.forward(random_input({1, 800}, rng));
    for (float v : y.data()) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Model, FloatAndDoubleAgree) {
  std::mt19937_64 rng(4);
  const auto spec = reference_spec("e2car_ref");
  Model<float> f(spec);
  Model<double> d(spec);
  const auto x = random_input({1, 800}, rng);
  const auto yf = f.forward(x);
  const auto yd = d.forward(x.cast<double>());
  for (std::size_t i = 0; i < yf.size(); ++i) ASSERT_NEAR(yf[i], yd[i], 1e-4);
}

TEST(WeightsIo, RoundTripGivesIdenticalOutputs) {
  std::mt19937_64 rng(5);
  Model<float> m(reference_spec("e2car_ref", 11));
  const auto path = tmp("e2car.e2cw");
  save_weights(m, path);
  const auto back = load_weights<float>(reference_spec("e2car_ref"), path);
  EXPECT_EQ(back.params(), m.params());
  for (int i = 0; i < 10; ++i) {
    const auto x = random_input({1, 800}, rng);
    EXPECT_EQ(back.forward(x), m.forward(x));
  }
}

TEST(WeightsIo, TruncatedFileIsFormatError) {
  Model<float> m(reference_spec("cnn_ref"));
  const auto path = tmp("cnn.e2cw");
  save_weights(m, path);
  const auto size = fs::file_size(path);
  for (auto cut : {std::uintmax_t{2}, std::uintmax_t{10}, size / 2, size - 1}) {
    fs::resize_file(path, cut);
    EXPECT_THROW(read_weights<float>(path), FormatError) << cut;
    save_weights(m, path);
  }
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(read_weights<float>(path), FormatError);
  EXPECT_THROW(read_weights<float>(tmp("missing.e2cw")), Error);
}

TEST(WeightsIo, WrongArchitectureListsShapes) {
  Model<float> m(reference_spec("cnn_ref"));
  const auto path = tmp("cnn_for_resnet.e2cw");
  save_weights(m, path);
  try {
    (void)load_weights<float>(reference_spec("resnet_ref"), path);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("parameterized layers"), std::string::npos) << e.what();
  }
  auto spec = reference_spec("cnn_ref");
  spec.layers[1].geometry = ConvGeometry::same(16, 16, 3);
  try {
    (void)load_weights<float>(spec, path);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected weights [16, 16, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found weights [16, 16, 5]"), std::string::npos) << msg;
  }
}

TEST(DatasetIo, RoundTripIsByteIdentical) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(0, 1);
  std::vector<SegmentPair> pairs(100);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (auto& v : pairs[i].contaminated) v = u(rng);
    for (auto& v : pairs[i].clean) v = u(rng);
    pairs[i].norm_min = -u(rng);
    pairs[i].norm_max = u(rng) + 1;
    pairs[i].degenerate = i % 17 == 0;
    pairs[i].origin_id = "rec-" + std::to_string(i / 10);
    pairs[i].start = static_cast<std::uint32_t>((i % 10) * 400);
  }
  const auto a = tmp("pairs_a.e2cd"), b = tmp("pairs_b.e2cd");
  save_dataset(pairs, a);
  const auto back = load_dataset(a);
  EXPECT_EQ(back, pairs);
  save_dataset(back, b);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
  fs::resize_file(a, fs::file_size(a) - 3);
  EXPECT_THROW(load_dataset(a), FormatError);
}
