#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "direp/ops.hpp"
#include "direp/trainers.hpp"

using namespace direp;
using T = Tensor<double>;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config(Algorithm algorithm) {
  TrainConfig c;
  c.algorithm = algorithm;
  c.precision = Precision::float64;
  auto& a = c.architecture;
  a.classes = 3;
  a.generator_hidden_width = 3;
  a.generator_hidden_layers = 1;
  a.direp_width = 2;
  a.wide_width = 4;
  a.classifier_hidden_layers = 1;
  a.discriminator_hidden_layers = 1;
  a.decoder_hidden_layers = 1;
  a.encoder_hidden_layers = 1;
  a.ddrep_width = 1;
  auto& w = c.weights;
  w.beta = 0.7;
  w.gamma = 0.3;
  w.mu = 1.9;
  w.lr_generator = w.lr_classifier = w.lr_discriminator = w.lr_encoder = w.lr_decoder = 0.0;
  c.batch_size = 5;
  c.iterations = 20;
  c.cadence = 5;
  return c;
}

Dataset toy_domain(std::size_t n, int domain, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.05f, 0.95f);
  Dataset d(4);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> x(4);
    for (auto& v : x) v = u(rng);
    d.push_back(x, static_cast<int>(i % 3), domain);
  }
  return d;
}

template <typename Real>
StepInput<Real> toy_input() {
  const Dataset s = toy_domain(5, 0, 1), t = toy_domain(4, 1, 2);
  const std::size_t si[] = {0, 1, 2, 3, 4}, ti[] = {0, 1, 2, 3};
  return {make_batch<Real>(s, si), make_batch<Real>(t, ti), {}};
}

T normal_draws(std::size_t rows, std::size_t cols, std::mt19937_64 rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(rows * cols);
  for (auto& e : v) e = normal(rng);
  return T::from({rows, cols}, v);
}

// Every loss of one step recomputed from the current weights, without tape.
struct Losses {
  double c = 0, d = 0, g = 0, r = 0, kl = 0, diff = 0, reverse_diff = 0;
};

Losses compute_losses(const ModelSet<double>& m, const StepInput<double>& in, const T& eps) {
  NoGradGuard guard;
  Losses out;
  const std::size_t ns = in.source.size(), n = ns + in.target.size();
  const T x = concat_rows<double>(std::vector<T>{in.source.x, in.target.x});
  const T direp = m.generator.forward(x);
  std::vector<int> domains(in.source.domains);
  domains.insert(domains.end(), in.target.domains.begin(), in.target.domains.end());
  out.c = classification_loss_from_logits(m.classifier.forward_logits(slice_rows(direp, 0, ns)),
                                          one_hot<double>(in.source.labels, 3))
              .item();
  if (m.discriminator) {
    const T logits = m.discriminator->forward_logits(direp);
    out.d = discriminator_loss_from_logits(logits, domains).item();
    out.g = generator_adversarial_loss_from_logits(logits, domains).item();
  }
  if (!m.decoder) return out;
  std::vector<T> parts{direp};
  if (m.encoder) {
    const auto e = m.encoder->forward(x, eps);
    out.kl = kl_loss(e.z_mean, e.z_log_var).item();
    parts.push_back(e.ddrep);
    const T spread = matmul(e.ddrep, T::full({1, 2}, 1.0));
    out.reverse_diff = normalized_difference_loss(slice_rows(direp, 0, ns), slice_rows(spread, 0, ns)).item() +
                       normalized_difference_loss(slice_rows(direp, ns, n), slice_rows(spread, ns, n)).item();
  }
  if (m.decoder_reads_domain_bit) parts.push_back(domain_column<double>(domains));
  if (m.private_source) {
    const T p = concat_rows<double>(
        std::vector<T>{m.private_source->forward(in.source.x), m.private_target->forward(in.target.x)});
    parts.push_back(p);
    out.diff = normalized_difference_loss(slice_rows(direp, 0, ns), slice_rows(p, 0, ns)).item() +
               normalized_difference_loss(slice_rows(direp, ns, n), slice_rows(p, ns, n)).item();
  }
  const T xhat = m.decoder->forward(concat_last<double>(parts));
  out.r = reconstruction_loss(slice_rows(xhat, 0, ns), in.source.x).item() +
          reconstruction_loss(slice_rows(xhat, ns, n), in.target.x).item();
  return out;
}

using Objective = std::function<double(const Losses&)>;

// Runs `step` with zero learning rates, recovers each parameter's gradient
// from Adam's first moment and compares it with central differences of the
// objective that parameter's network is meant to minimize.
void check_routing(ModelSet<double>& m, const StepInput<double>& in, const T& eps,
                   const std::function<void()>& step, const std::function<Objective(Role)>& objective_for) {
  step();
  const double h = 1e-6;
  auto params = m.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Objective J = objective_for(params[p].role);
    auto values = params[p].tensor->mutable_data();
    const auto& moment = m.adam[p].first_moment;
    ASSERT_EQ(moment.size(), values.size()) << params[p].name << " was not updated";
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double up = J(compute_losses(m, in, eps));
      values[k] = saved - h;
      const double down = J(compute_losses(m, in, eps));
      values[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = moment[k] / (1.0 - m.adam[p].beta1);
      EXPECT_NEAR(analytic, numeric, 1e-6 * std::max({1.0, std::abs(numeric)}))
          << params[p].name << "[" << k << "]";
    }
  }
}

template <typename Real>
bool same_values(const Tensor<Real>& a, const Tensor<Real>& b) {
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

template <typename Real>
bool same_network(const Network<Real>& a, const Network<Real>& b) {
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    if (!same_values(a.parameters()[i], b.parameters()[i])) return false;
  }
  return true;
}

DomainPair toy_pair(std::uint64_t seed) {
  DomainPair p = synthetic_blobs(40, 3, CheatScenario::none, seed);
  return p;
}

}  // namespace

TEST(Routing, GanBased) {
  auto config = tiny_config(Algorithm::gan_based);
  auto m = make_models<double>(config, 4);
  const auto in = toy_input<double>();
  const double lambda = lambda_schedule(1);
  check_routing(m, in, T(), [&] { gan_based_step(m, in, config, 1); }, [&](Role role) -> Objective {
    switch (role) {
      case Role::generator: return [&](const Losses& l) { return 0.7 * l.c + lambda * l.g; };
      case Role::classifier: return [](const Losses& l) { return l.c; };
      default: return [](const Losses& l) { return l.d; };
    }
  });
}

TEST(Routing, Dann) {
  auto config = tiny_config(Algorithm::dann);
  auto m = make_models<double>(config, 4);
  const auto in = toy_input<double>();
  const double lambda = lambda_schedule(3);
  check_routing(m, in, T(), [&] { dann_step(m, in, config, 3); }, [&](Role role) -> Objective {
    switch (role) {
      case Role::generator: return [&](const Losses& l) { return 0.7 * l.c - lambda * l.d; };
      case Role::classifier: return [](const Losses& l) { return l.c; };
      default: return [](const Losses& l) { return l.d; };
    }
  });
}

TEST(Routing, DannAtLambdaZeroIsSourceTraining) {
  auto config = tiny_config(Algorithm::dann);
  auto m = make_models<double>(config, 4);
  const auto in = toy_input<double>();
  check_routing(m, in, T(), [&] { dann_step(m, in, config, 0); }, [&](Role role) -> Objective {
    if (role == Role::discriminator) return [](const Losses& l) { return l.d; };
    if (role == Role::generator) return [](const Losses& l) { return 0.7 * l.c; };
    return [](const Losses& l) { return l.c; };
  });
}

TEST(Routing, ExplicitDdrep) {
  auto config = tiny_config(Algorithm::explicit_ddrep);
  auto m = make_models<double>(config, 4);
  EXPECT_EQ(m.decoder->input_width(), 3u);
  const auto in = toy_input<double>();
  const double lambda = lambda_schedule(1);
  std::mt19937_64 noise(4);
  StepReport report;
  check_routing(m, in, T(), [&] { report = explicit_ddrep_step(m, in, config, 1, noise); },
                [&](Role role) -> Objective {
                  switch (role) {
                    case Role::generator: return [&](const Losses& l) { return 0.7 * l.c + lambda * l.g + 0.3 * l.r; };
                    case Role::classifier: return [](const Losses& l) { return l.c; };
                    case Role::decoder: return [](const Losses& l) { return l.r; };
                    default: return [](const Losses& l) { return l.d; };
                  }
                });
  EXPECT_EQ(report.loss_kl, 0.0);
  EXPECT_GT(report.loss_r, 0.0);
}

TEST(Routing, Vaegan) {
  auto config = tiny_config(Algorithm::vaegan);
  auto m = make_models<double>(config, 4);
  const auto in = toy_input<double>();
  const double lambda = lambda_schedule(2);
  std::mt19937_64 noise(8);
  const T eps = normal_draws(9, 1, noise);
  check_routing(m, in, eps, [&] { vaegan_step(m, in, config, 2, noise); }, [&](Role role) -> Objective {
    switch (role) {
      case Role::generator: return [&](const Losses& l) { return 0.7 * l.c + lambda * l.g + 0.3 * l.r; };
      case Role::classifier: return [](const Losses& l) { return l.c; };
      case Role::decoder: return [](const Losses& l) { return l.r; };
      case Role::encoder: return [](const Losses& l) { return l.kl + 1.9 * l.r; };
      default: return [](const Losses& l) { return l.d; };
    }
  });
}

TEST(Routing, VaeganReverseDifference) {
  auto config = tiny_config(Algorithm::vaegan);
  config.ablation = Ablation::vaegan_reverse_difference;
  config.weights.reverse_difference = 0.4;
  auto m = make_models<double>(config, 4);
  const auto in = toy_input<double>();
  const double lambda = lambda_schedule(2);
  std::mt19937_64 noise(8);
  const T eps = normal_draws(9, 1, noise);
  StepReport report;
  check_routing(
      m, in, eps, [&] { report = ablation_step(config.ablation, m, in, config, 2, noise); },
      [&](Role role) -> Objective {
        switch (role) {
          case Role::generator:
            return [&](const Losses& l) { return 0.7 * l.c + lambda * l.g + 0.3 * l.r - 0.4 * l.reverse_diff; };
          case Role::classifier: return [](const Losses& l) { return l.c; };
          case Role::decoder: return [](const Losses& l) { return l.r; };
          case Role::encoder: return [](const Losses& l) { return l.kl + 1.9 * l.r - 0.4 * l.reverse_diff; };
          default: return [](const Losses& l) { return l.d; };
        }
      });
  EXPECT_NEAR(report.loss_difference, compute_losses(m, in, eps).reverse_diff, 1e-12);
}

TEST(Routing, Dsn) {
  auto config = tiny_config(Algorithm::dsn);
  auto m = make_models<double>(config, 4);
  EXPECT_EQ(m.decoder->input_width(), 4u);
  const auto in = toy_input<double>();
  const double lambda = lambda_schedule(1);
  check_routing(m, in, T(), [&] { dsn_step(m, in, config, 1); }, [&](Role role) -> Objective {
    switch (role) {
      case Role::generator: return [&](const Losses& l) { return 0.7 * l.c + lambda * l.g + 0.15 * l.r; };
      case Role::classifier: return [](const Losses& l) { return l.c; };
      case Role::decoder: return [](const Losses& l) { return 0.15 * l.r; };
      case Role::private_source:
      case Role::private_target: return [](const Losses& l) { return 0.15 * l.r + 0.05 * l.diff; };
      default: return [](const Losses& l) { return l.d; };
    }
  });
}

TEST(Steps, ZeroLearningRateKeepsWeightsAndReportsLosses) {
  auto config = tiny_config(Algorithm::vaegan);
  auto m = make_models<double>(config, 4);
  const auto before = m.generator;
  std::mt19937_64 noise(1);
  const auto report = vaegan_step(m, toy_input<double>(), config, 5, noise);
  EXPECT_TRUE(same_network(before, m.generator));
  EXPECT_GT(report.loss_c, 0.0);
  EXPECT_GT(report.loss_r, 0.0);
  EXPECT_GT(report.loss_kl, 0.0);
  EXPECT_NEAR(report.lambda, lambda_schedule(5), 1e-15);
}

TEST(Steps, GammaZeroWithFrozenEncoderDecoderIsGanBased) {
  auto vconfig = tiny_config(Algorithm::vaegan);
  auto& w = vconfig.weights;
  w.lr_generator = w.lr_classifier = w.lr_discriminator = w.lr_encoder = w.lr_decoder = 1e-2;
  w.gamma = 0.0;
  vconfig.frozen = {Role::encoder, Role::decoder};
  vconfig.precision = Precision::float32;
  auto gconfig = vconfig;
  gconfig.algorithm = Algorithm::gan_based;
  gconfig.frozen.clear();
  auto a = make_models<float>(vconfig, 4);
  auto b = make_models<float>(gconfig, 4);
  const auto in = toy_input<float>();
  std::mt19937_64 noise(3);
  const auto decoder_before = *a.decoder;
  for (std::size_t t = 0; t < 5; ++t) {
    vaegan_step(a, in, vconfig, t, noise);
    gan_based_step(b, in, gconfig, t);
    ASSERT_TRUE(same_network(a.generator, b.generator)) << "step " << t;
    ASSERT_TRUE(same_network(a.classifier, b.classifier)) << "step " << t;
    ASSERT_TRUE(same_network(*a.discriminator, *b.discriminator)) << "step " << t;
  }
  EXPECT_TRUE(same_network(decoder_before, *a.decoder));
}

TEST(Steps, ReverseDifferenceWeightZeroIsVaegan) {
  auto config = tiny_config(Algorithm::vaegan);
  auto& w = config.weights;
  w.lr_generator = w.lr_classifier = w.lr_discriminator = w.lr_encoder = w.lr_decoder = 1e-2;
  w.reverse_difference = 0.0;
  config.precision = Precision::float32;
  auto ablated = config;
  ablated.ablation = Ablation::vaegan_reverse_difference;
  auto a = make_models<float>(config, 4);
  auto b = make_models<float>(ablated, 4);
  const auto in = toy_input<float>();
  std::mt19937_64 na(6), nb(6);
  for (std::size_t t = 0; t < 4; ++t) {
    vaegan_step(a, in, config, t, na);
    ablation_step(Ablation::vaegan_reverse_difference, b, in, ablated, t, nb);
  }
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(same_values(*pa[i].tensor, *pb[i].tensor)) << pa[i].name;
}

TEST(Steps, DsnDifferenceVanishesForZeroPrivate) {
  auto config = tiny_config(Algorithm::dsn);
  auto m = make_models<double>(config, 4);
  for (auto* net : {&*m.private_source, &*m.private_target}) {
    for (auto& p : net->parameters()) std::fill(p.mutable_data().begin(), p.mutable_data().end(), 0.0);
  }
  EXPECT_EQ(dsn_step(m, toy_input<double>(), config, 1).loss_difference, 0.0);
  const LossWeights defaults;
  EXPECT_EQ(defaults.dsn_reconstruction, 0.15);
  EXPECT_EQ(defaults.dsn_difference, 0.05);
}

TEST(Steps, AblationNeedsMatchingModels) {
  auto config = tiny_config(Algorithm::gan_based);
  auto m = make_models<double>(config, 4);
  std::mt19937_64 noise(1);
  EXPECT_THROW(ablation_step(Ablation::dsn_reverse_kl, m, toy_input<double>(), config, 1, noise), ConfigError);
}

TEST(Steps, NonFiniteInputIsNumericError) {
  auto config = tiny_config(Algorithm::gan_based);
  auto m = make_models<double>(config, 4);
  auto in = toy_input<double>();
  in.source.x.mutable_data()[0] = std::nan("");
  try {
    gan_based_step(m, in, config, 7);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.iteration(), 7u);
  }
  clear_tape<double>();
}

TEST(Config, Validation) {
  TrainConfig c;
  EXPECT_TRUE(c.problems().empty());
  EXPECT_EQ(c.iterations, 10000u);
  EXPECT_EQ(c.batch_size, 128u);
  c.ablation = Ablation::dsn_star;
  c.batch_size = 0;
  c.semi_labels_per_class = 3;
  EXPECT_EQ(c.problems().size(), 3u);
  EXPECT_THROW(c.validate(), ConfigError);
  TrainConfig star;
  star.algorithm = Algorithm::dsn;
  star.ablation = Ablation::dsn_star;
  EXPECT_EQ(star.total_iterations(), 20000u);
  EXPECT_EQ(parse_algorithm("explicit"), Algorithm::explicit_ddrep);
  EXPECT_THROW(parse_algorithm("vae"), ConfigError);
}

TEST(Config, ExplicitVariantBWidensDecoder) {
  TrainConfig c;
  c.algorithm = Algorithm::explicit_ddrep;
  EXPECT_EQ(make_models<float>(c, 794).decoder->input_width(), 101u);
  c.explicit_with_encoder = true;
  const auto m = make_models<float>(c, 794);
  EXPECT_EQ(m.decoder->input_width(), 102u);
  EXPECT_TRUE(m.encoder.has_value());
}

TEST(Train, ZeroIterationsReturnsInitialNetworks) {
  auto config = tiny_config(Algorithm::vaegan);
  config.iterations = 0;
  const auto pair = toy_pair(1);
  const auto result = train<double>(config, pair);
  const auto fresh = make_models<double>(config, pair.source_train.width());
  EXPECT_TRUE(same_network(result.models.generator, fresh.generator));
  EXPECT_TRUE(same_network(*result.models.decoder, *fresh.decoder));
  EXPECT_TRUE(result.history.empty());
}

TEST(Train, SameSeedSameWeights) {
  auto config = tiny_config(Algorithm::vaegan);
  auto& w = config.weights;
  w.lr_generator = w.lr_classifier = w.lr_discriminator = w.lr_encoder = w.lr_decoder = 1e-3;
  config.semi_labels_per_class = 5;
  const auto pair = toy_pair(2);
  const auto a = train<double>(config, pair);
  const auto b = train<double>(config, pair);
  EXPECT_TRUE(same_network(a.models.generator, b.models.generator));
  EXPECT_TRUE(same_network(a.models.encoder->trunk(), b.models.encoder->trunk()));
  EXPECT_EQ(a.target_acc, b.target_acc);
  ASSERT_EQ(a.history.size(), 4u);
  EXPECT_EQ(a.history.back().iteration, 19u);
  EXPECT_FALSE(std::isnan(a.history.back().target_acc));
  config.seed = 1;
  const auto c = train<double>(config, pair);
  EXPECT_FALSE(same_network(a.models.generator, c.models.generator));
}

TEST(Train, SourceLossFallsOnFashionMnist) {
  if (!fs::exists(default_data_dir() / "fashion" / "train-images-idx3-ubyte.gz")) GTEST_SKIP() << "no data";
  const DomainPair pair = build_fashion_pair(CheatScenario::none, 0, default_data_dir());
  TrainConfig config;
  config.iterations = 200;
  config.cadence = 10;
  config.eval_samples = 200;
  const auto result = train<float>(config, pair);
  ASSERT_EQ(result.history.size(), 20u);
  const double first = (result.history[0].loss_c + result.history[1].loss_c) / 2;
  const double last = (result.history[18].loss_c + result.history[19].loss_c) / 2;
  EXPECT_LT(last, first);
}

TEST(Evaluate, ConstantClassifierAndOracle) {
  Dataset d(3);
  for (int i = 0; i < 30; ++i) {
    std::vector<float> x(3, 0.0f);
    x[static_cast<std::size_t>(i % 3)] = 1.0f;
    d.push_back(x, i % 3, 0);
  }
  Network<double> g(Role::generator, {{3, 3, Activation::identity}}, 1);
  Network<double> c(Role::classifier, {{3, 3, Activation::softmax}}, 2);
  auto zero = [](Network<double>& n) {
    for (auto& p : n.parameters()) std::fill(p.mutable_data().begin(), p.mutable_data().end(), 0.0);
  };
  zero(g);
  zero(c);
  c.parameters()[1].mutable_data()[0] = 1.0;  // always class 0
  EXPECT_NEAR(evaluate(g, c, d), 1.0 / 3.0, 1e-12);
  zero(c);  // all ties: lowest index
  EXPECT_NEAR(evaluate(g, c, d), 1.0 / 3.0, 1e-12);
  for (std::size_t i = 0; i < 3; ++i) {
    g.parameters()[0].mutable_data()[i * 3 + i] = 1.0;
    c.parameters()[0].mutable_data()[i * 3 + i] = 1.0;
  }
  EXPECT_EQ(evaluate(g, c, d), 1.0);
  EXPECT_EQ(evaluate(g, c, d, 4), 1.0);
}

TEST(Evaluate, UntrainedIsAtChanceOnFashionTarget) {
  if (!fs::exists(default_data_dir() / "fashion" / "train-images-idx3-ubyte.gz")) GTEST_SKIP() << "no data";
  const DomainPair pair = build_fashion_pair(CheatScenario::shift, 0, default_data_dir());
  TrainConfig config;
  const auto m = make_models<float>(config, pair.target_test.width());
  EXPECT_NEAR(evaluate(m.generator, m.classifier, pair.target_test), 0.10, 0.03);
}

TEST(FlipBit, UnflippedIsReconstructionAndDoubleFlipRestores) {
  auto config = tiny_config(Algorithm::explicit_ddrep);
  const auto m = make_models<double>(config, 4);
  const auto in = toy_input<double>();
  const std::vector<int> d = in.target.domains;
  std::vector<int> flipped(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) flipped[i] = 1 - d[i];
  const T plain = flip_bit_reconstruct(m, in.target.x, d, false);
  NoGradGuard guard;
  const T direct = m.decoder->forward(concat_last(m.generator.forward(in.target.x), domain_column<double>(d)));
  EXPECT_TRUE(same_values(plain, direct));
  const T once = flip_bit_reconstruct(m, in.target.x, d, true);
  EXPECT_FALSE(same_values(once, plain));
  EXPECT_TRUE(same_values(flip_bit_reconstruct(m, in.target.x, flipped, true), plain));
  EXPECT_THROW(flip_bit_reconstruct(make_models<double>(tiny_config(Algorithm::vaegan), 4), in.target.x, d),
               ContractError);
}

TEST(DdrepBits, ClosedForms) {
  Encoder<double> e(4, 3, 1, 1, 5);
  auto names = e.parameter_names();
  auto params = e.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (names[i].find("z_") != std::string::npos) {
      std::fill(params[i]->mutable_data().begin(), params[i]->mutable_data().end(), 0.0);
    }
  }
  const Dataset data = toy_domain(10, 0, 3);
  EXPECT_EQ(ddrep_information_bits(e, data), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (names[i] == "E.z_mean0.bias") params[i]->mutable_data()[0] = 1.0;
  }
  EXPECT_NEAR(ddrep_information_bits(e, data), 0.7213475204444817, 1e-12);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  const fs::path path = fs::temp_directory_path() / "direp_test_models.ckpt";
  auto config = tiny_config(Algorithm::dsn);
  auto a = make_models<double>(config, 4);
  save_models(a, path, 3, "algo = dsn\n");
  config.seed = 99;
  auto b = make_models<double>(config, 4);
  EXPECT_FALSE(same_network(a.generator, b.generator));
  load_models(b, path);
  EXPECT_TRUE(same_network(a.generator, b.generator));
  EXPECT_TRUE(same_network(*a.private_target, *b.private_target));
  auto wrong = make_models<double>(tiny_config(Algorithm::vaegan), 4);
  EXPECT_ANY_THROW(load_models(wrong, path));
}

TEST(Reveal, PerClassCounts) {
  const Dataset t = toy_domain(60, 1, 4);
  const auto idx = reveal_target_labels(t, 5, 11);
  ASSERT_EQ(idx.size(), 15u);
  std::vector<int> counts(3, 0);
  for (auto i : idx) ++counts[*t.label(i)];
  EXPECT_EQ(counts, (std::vector<int>{5, 5, 5}));
  EXPECT_EQ(idx, reveal_target_labels(t, 5, 11));
  EXPECT_TRUE(reveal_target_labels(t, 0, 11).empty());
}

TEST(HiddenDataEffect, RandomCheatingBlobs) {
  // GAN-based should trail VAEGAN on random-cheating blobs by more than 5 points.
  TrainConfig config;
  config.iterations = 1500;
  config.cadence = 1500;
  config.batch_size = 64;
  config.architecture.generator_hidden_width = 32;
  config.architecture.generator_hidden_layers = 2;
  config.architecture.direp_width = 16;
  config.architecture.wide_width = 32;
  double vaegan = 0.0, gan = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DomainPair pair = synthetic_blobs(300, 4, CheatScenario::random, seed);
    config.seed = seed;
    config.algorithm = Algorithm::vaegan;
    vaegan += train<float>(config, pair).target_acc / 5;
    config.algorithm = Algorithm::gan_based;
    gan += train<float>(config, pair).target_acc / 5;
  }
  RecordProperty("vaegan", std::to_string(vaegan));
  RecordProperty("gan", std::to_string(gan));
  EXPECT_GT(vaegan - gan, 0.05) << "vaegan " << vaegan << " gan " << gan;
}
