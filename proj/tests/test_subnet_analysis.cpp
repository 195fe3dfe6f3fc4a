#include <gtest/gtest.h>

#include <cmath>

#include "grokking/analysis.hpp"
#include "grokking/constructions.hpp"
#include "grokking/subnet_analysis.hpp"
#include "oracles.hpp"

using namespace grokking;

namespace {

std::vector<double> all_inputs(std::size_t n) {
  std::vector<double> xs;
  for (std::uint64_t bits = 0; bits < (1u << n); ++bits) {
    for (std::size_t c = 0; c < n; ++c) xs.push_back(((bits >> c) & 1u) ? 1.0 : -1.0);
  }
  return xs;
}

// The 6-neuron net on bits {0,1,2} of a width-10 layer; neurons 6..9 are zero.
MlpParams padded_six() {
  const std::vector<std::size_t> s{0, 1, 2};
  const auto six = build_dnf_six(3, s);
  MlpParams m(3, 10);
  std::copy(six.W.begin(), six.W.end(), m.W.begin());
  std::copy(six.b.begin(), six.b.end(), m.b.begin());
  std::copy(six.u.begin(), six.u.end(), m.u.begin());
  return m;
}

bool agrees(const MlpParams& a, const MlpParams& b, std::span<const double> xs) {
  return predictions(a, xs) == predictions(b, xs);
}

}  // namespace

TEST(NeuronMagnitude, Basics) {
  MlpParams m(3, 2);
  EXPECT_EQ(neuron_magnitude(m, 0), 0.0);
  m.W[3] = 1.0;
  m.u[1] = 100.0;
  EXPECT_EQ(neuron_magnitude(m, 1), 1.0);
  EXPECT_DOUBLE_EQ(neuron_magnitude(m, 1, {true, true}), std::sqrt(10001.0));
  EXPECT_THROW(neuron_magnitude(m, 2), std::out_of_range);
}

TEST(NeuronMagnitude, SixNeuronFirstUnit) {
  const std::vector<std::size_t> s{0, 1, 2};
  EXPECT_DOUBLE_EQ(neuron_magnitude(build_dnf_six(5, s), 0), std::sqrt(183.0));
}

TEST(PruneToK, Extremes) {
  Rng rng(1);
  const auto m = oracle::random_params(4, 6, rng);
  const auto xs = oracle::random_pm1(16 * 4, rng);
  EXPECT_EQ(prune_to_k(m, 6), m);
  const auto none = prune_to_k(m, 0);
  for (std::size_t j = 0; j < 16; ++j) EXPECT_EQ(forward(none, std::span<const double>(xs).subspan(j * 4, 4)), 0.0);
  EXPECT_THROW(prune_to_k(m, 7), std::invalid_argument);
}

TEST(PruneToK, ZeroNeuronsGoFirst) {
  MlpParams m(2, 4);
  m.W[2 * 2] = 1.5;
  m.u[2] = -2.0;
  const auto pruned = prune_to_k(m, 1);
  const auto xs = all_inputs(2);
  for (std::size_t j = 0; j < 4; ++j) {
    const auto x = std::span<const double>(xs).subspan(j * 2, 2);
    EXPECT_EQ(forward(pruned, x), forward(m, x));
  }
}

TEST(PruneToK, TiesPruneLowerIndexFirst) {
  MlpParams m(1, 3);
  m.W = {1.0, 1.0, 1.0};
  m.u = {1.0, 1.0, 1.0};
  const auto pruned = prune_to_k(m, 1);
  EXPECT_EQ(pruned.u, (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(PruneToK, DoesNotModifyInput) {
  Rng rng(2);
  const auto m = oracle::random_params(3, 5, rng);
  const auto copy = m;
  (void)prune_to_k(m, 2);
  EXPECT_EQ(m, copy);
}

TEST(ActiveSubnetwork, PaddedSixNeuronNet) {
  const auto m = padded_six();
  const auto xs = all_inputs(3);
  const auto act = active_subnetwork(m, xs);
  EXPECT_EQ(act.k_min, 6u);
  EXPECT_EQ(act.mask.selected, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  // The magnitude prefix of size 5 drops h2, which mis-signs x = (-1,-1,+1).
  EXPECT_FALSE(agrees(prune_to_k(m, 5), m, xs));
  EXPECT_EQ(prune_to_k(m, 5).u[1], 0.0);
  EXPECT_EQ(forward(prune_to_k(m, 5), std::vector<double>{-1, -1, 1}), -3.0);
  // h1, h2, h4, h6 are individually necessary. h3 and h5 fire alone on their
  // configurations, where f = 0 already predicts +1.
  for (std::size_t drop = 0; drop < 6; ++drop) {
    auto without = m;
    without.u[drop] = 0.0;
    EXPECT_EQ(agrees(without, m, xs), drop == 2 || drop == 4) << "neuron " << drop;
  }
}

TEST(ActiveSubnetwork, ZeroNetwork) {
  const auto xs = all_inputs(3);
  EXPECT_EQ(active_subnetwork(MlpParams(3, 5), xs).k_min, 0u);
  EXPECT_EQ(effective_sparsity(MlpParams(3, 5), xs), 0u);
}

TEST(ActiveSubnetwork, SingleNeuron) {
  MlpParams m(2, 1);
  m.W = {1.0, 0.0};
  const auto xs = all_inputs(2);
  m.u = {1.0};  // only non-negative outputs: sign(0) already agrees
  EXPECT_EQ(active_subnetwork(m, xs).k_min, 0u);
  m.u = {-1.0};
  EXPECT_EQ(active_subnetwork(m, xs).k_min, 1u);
}

TEST(ActiveSubnetwork, DnfGeneralAtMostEight) {
  const std::vector<std::size_t> s{0, 1, 2};
  EXPECT_LE(effective_sparsity(build_dnf_general(3, s), all_inputs(3)), 8u);
}

TEST(ActiveSubnetwork, MatchesBruteForceOracle) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const std::size_t p = 1 + rng.below(12);
    const std::size_t rows = 1 + rng.below(64);
    auto m = oracle::random_params(n, p, rng);
    // Some exact zeros and duplicated neurons to exercise ties.
    if (rng.coin()) {
      const std::size_t i = rng.below(p);
      std::fill(m.W.begin() + i * n, m.W.begin() + (i + 1) * n, 0.0);
      m.b[i] = 0.0;
    }
    const auto xs = oracle::random_pm1(rows * n, rng);
    const auto act = active_subnetwork(m, xs);
    ASSERT_EQ(act.k_min, oracle::brute_force_k_min(m, xs));
    EXPECT_TRUE(agrees(prune_to_k(m, act.k_min), m, xs));
    if (act.k_min > 0) { EXPECT_FALSE(agrees(prune_to_k(m, act.k_min - 1), m, xs)); }
    EXPECT_EQ(act.mask.size(), act.k_min);
    EXPECT_TRUE(agrees(restrict_to(m, act.mask), m, xs));
  }
}

TEST(ActiveSubnetwork, BoundedByNonzeroNeurons) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = oracle::random_params(4, 10, rng);
    std::size_t nonzero = 10;
    for (std::size_t i = 0; i < 10; i += 3) {
      std::fill(m.W.begin() + i * 4, m.W.begin() + (i + 1) * 4, 0.0);
      m.b[i] = 0.0;
      --nonzero;
    }
    EXPECT_LE(effective_sparsity(m, oracle::random_pm1(32 * 4, rng)), nonzero);
  }
}

TEST(MaskNorm, Values) {
  MlpParams m(2, 3);
  EXPECT_EQ(mask_norm(m, make_mask({0}, 3)), 0.0);
  m.W = {1.0, 0.0, 0.0, 3.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(mask_norm(m, make_mask({0, 1}, 3)), 2.0);
  m.b[2] = 2.0;
  EXPECT_DOUBLE_EQ(mask_norm(m, full_mask(3)), 2.0);
  EXPECT_THROW(mask_norm(m, NeuronMask{}), std::invalid_argument);
}

TEST(MaskNorm, ZeroIffIncomingWeightsZero) {
  Rng rng(6);
  auto m = oracle::random_params(3, 4, rng);
  EXPECT_GT(mask_norm(m, make_mask({1, 2}, 4)), 0.0);
  std::fill(m.W.begin() + 3, m.W.begin() + 9, 0.0);
  m.b[1] = m.b[2] = 0.0;
  EXPECT_EQ(mask_norm(m, make_mask({1, 2}, 4)), 0.0);
}

TEST(Faithfulness, FullAndEmptyMasks) {
  Rng rng(7);
  const auto m = oracle::random_params(5, 8, rng);
  const auto xs = oracle::random_pm1(40 * 5, rng);
  EXPECT_EQ(faithfulness(m, full_mask(8), xs), 1.0);
  const auto preds = predictions(m, xs);
  const double positive = std::count(preds.begin(), preds.end(), 1.0) / 40.0;
  EXPECT_DOUBLE_EQ(faithfulness(m, NeuronMask{}, xs), positive);
  EXPECT_THROW(faithfulness(m, full_mask(8), std::vector<double>{}), std::invalid_argument);
}

TEST(Faithfulness, InvariantToOutputScaling) {
  Rng rng(8);
  auto m = oracle::random_params(5, 8, rng);
  const auto xs = oracle::random_pm1(40 * 5, rng);
  const auto mask = make_mask({0, 3, 5}, 8);
  const double before = faithfulness(m, mask, xs);
  for (auto& u : m.u) u *= 4.0;
  EXPECT_EQ(faithfulness(m, mask, xs), before);
}

TEST(ControlMask, ComplementWhenFull) {
  const auto exclude = make_mask({1, 4}, 6);
  const auto c = control_mask(4, 6, 3, exclude);
  EXPECT_EQ(c.selected, (std::vector<std::size_t>{0, 2, 3, 5}));
  EXPECT_EQ(c.label, MaskLabel::control);
  EXPECT_THROW(control_mask(5, 6, 3, exclude), std::invalid_argument);
}

TEST(ControlMask, DeterministicAndUniform) {
  const auto exclude = make_mask({0, 1, 2, 3, 4, 5}, 1000);
  EXPECT_EQ(control_mask(6, 1000, 9, exclude).selected, control_mask(6, 1000, 9, exclude).selected);
  std::vector<int> hits(1000, 0);
  const int draws = 1000;
  for (int s = 0; s < draws; ++s) {
    const auto c = control_mask(6, 1000, 1000 + s, exclude);
    for (auto i : c.selected) {
      ASSERT_FALSE(exclude.contains(i));
      ++hits[i];
    }
  }
  // Each eligible index: Binomial(1000, 6/994), mean about 6; count the
  // total and bound the maximum at mean + 5 sd.
  const double pr = 6.0 / 994.0;
  const double sd = std::sqrt(draws * pr * (1 - pr));
  int total = 0;
  for (std::size_t i = 6; i < 1000; ++i) {
    total += hits[i];
    EXPECT_LE(hits[i], draws * pr + 5 * sd);
  }
  EXPECT_EQ(total, 6 * draws);
}

TEST(MemorizationEpoch, FirstStrictlyAbove) {
  std::vector<MetricsRecord> rs(3);
  rs[0].step = 10;
  rs[0].train_accuracy = 0.5;
  rs[1].step = 20;
  rs[1].train_accuracy = 0.99;
  rs[2].step = 30;
  rs[2].train_accuracy = 1.0;
  EXPECT_EQ(memorization_epoch(rs), 20u);
  rs[1].train_accuracy = 0.98;
  EXPECT_EQ(memorization_epoch(rs), 30u);
  rs[2].train_accuracy = 0.9;
  EXPECT_THROW(memorization_epoch(rs), NeverMemorized);
  EXPECT_THROW(memorization_epoch(std::vector<MetricsRecord>{}), std::invalid_argument);
}

TEST(AnalyzeRun, ConstantRun) {
  const auto task = generate_task(12, 3, 1);
  const auto train_set = sample_dataset(task, 100, 2);
  const auto test_set = sample_dataset(task, 50, 3);
  // A 6-neuron solution plus decoys, saved unchanged at every checkpoint.
  const auto six = build_dnf_six(12, task.indices);
  MlpParams m(12, 40);
  Rng rng(4);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t c = 0; c < 12; ++c) m.W[i * 12 + c] = i < 6 ? six.W[i * 12 + c] : rng.uniform(-0.1, 0.1);
    m.b[i] = i < 6 ? six.b[i] : rng.uniform(-0.1, 0.1);
    m.u[i] = i < 6 ? six.u[i] : rng.uniform(-0.1, 0.1);
  }
  RunArtifacts run;
  run.store = std::make_shared<MemoryCheckpointStore>();
  for (std::uint64_t step : {0, 5, 10}) {
    run.store->put(step, m);
    run.checkpoint_steps.push_back(step);
    MetricsRecord r;
    r.step = step;
    r.train_accuracy = 1.0;
    run.metrics.push_back(r);
  }
  const auto report = analyze_run(run, train_set.inputs, test_set.inputs, 11);
  EXPECT_EQ(report.memorization_step, std::optional<std::uint64_t>(0));
  ASSERT_TRUE(report.overlap);
  EXPECT_EQ(report.overlap->jaccard, 1.0);
  const double final_faith = report.subnet_at(10, MaskLabel::generalizing)->faithfulness;
  for (std::uint64_t step : {0, 5, 10}) {
    EXPECT_EQ(report.subnet_at(step, MaskLabel::generalizing)->faithfulness, final_faith);
    EXPECT_NE(report.subnet_at(step, MaskLabel::control), nullptr);
  }
  EXPECT_EQ(final_faith, 1.0);
  EXPECT_EQ(report.generalizing.size(), report.sparsity.back().second);
  for (const auto& r : report.metrics) EXPECT_TRUE(r.effective_sparsity.has_value());
  for (const auto& t : report.neurons) EXPECT_EQ(t.norms.size(), 3u);

  const std::string csv = subnets_csv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,mask_label,mean_norm,faithfulness");
  EXPECT_NE(neurons_csv(report).find("step,neuron_index,norm,in_memorization_mask,in_generalizing_mask\n"),
            std::string::npos);
}

TEST(AnalyzeRun, NeedsTwoCheckpoints) {
  RunArtifacts run;
  run.store = std::make_shared<MemoryCheckpointStore>();
  run.checkpoint_steps = {0};
  EXPECT_THROW(analyze_run(run, std::vector<double>{1.0}, std::vector<double>{1.0}, 0), std::invalid_argument);
}

TEST(MaskOverlap, Jaccard) {
  const auto a = make_mask({1, 2, 3}, 10);
  const auto b = make_mask({3, 4}, 10);
  const auto s = mask_overlap(a, b);
  EXPECT_EQ(s.intersection, 1u);
  EXPECT_DOUBLE_EQ(s.jaccard, 0.25);
}
