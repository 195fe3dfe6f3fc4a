#include <gtest/gtest.h>

#include "grokking/constructions.hpp"
#include "grokking/subnet_analysis.hpp"

using namespace grokking;

namespace {

std::vector<double> support_inputs(std::size_t n, std::span<const std::size_t> s) {
  std::vector<double> xs;
  for (std::uint64_t bits = 0; bits < (1u << s.size()); ++bits) {
    std::vector<double> x(n, 1.0);
    for (std::size_t t = 0; t < s.size(); ++t) x[s[t]] = ((bits >> t) & 1u) ? 1.0 : -1.0;
    xs.insert(xs.end(), x.begin(), x.end());
  }
  return xs;
}

double f_at(const MlpParams& m, std::initializer_list<double> bits) { return forward(m, std::vector<double>(bits)); }

// Brute-force necessity: the smallest set of neurons (by exhaustive subset
// search) whose restriction predicts like the full net on `xs`.
std::size_t smallest_agreeing_subset(const MlpParams& m, std::span<const double> xs) {
  const auto reference = predictions(m, xs);
  std::size_t best = m.p;
  for (std::uint64_t subset = 0; subset < (1u << m.p); ++subset) {
    MlpParams sub = m;
    for (std::size_t i = 0; i < m.p; ++i) {
      if (!((subset >> i) & 1u)) sub.u[i] = 0.0;
    }
    if (predictions(sub, xs) == reference) best = std::min<std::size_t>(best, std::popcount(subset));
  }
  return best;
}

}  // namespace

TEST(DnfGeneral, SmallSizes) {
  const std::vector<std::size_t> s1{0};
  const auto m1 = build_dnf_general(1, s1);
  EXPECT_EQ(m1.p, 2u);
  EXPECT_TRUE(verify_parity_net(m1, 1, s1, {.exhaustive = true}));

  const std::vector<std::size_t> s3{4, 17, 33};
  const auto m3 = build_dnf_general(40, s3);
  EXPECT_EQ(m3.p, 8u);
  EXPECT_TRUE(verify_parity_net(m3, 40, s3));
  for (std::size_t i = 0; i < m3.p; ++i) {
    for (std::size_t c = 0; c < 40; ++c) {
      if (c != 4 && c != 17 && c != 33) { EXPECT_EQ(m3.W[i * 40 + c], 0.0); }
    }
  }
}

TEST(DnfGeneral, SizeGuard) {
  std::vector<std::size_t> s(21);
  std::iota(s.begin(), s.end(), std::size_t{0});
  EXPECT_THROW(build_dnf_general(30, s), std::invalid_argument);
}

TEST(DnfSix, CaseOutputs) {
  const std::vector<std::size_t> s{0, 1, 2};
  const auto m = build_dnf_six(3, s);
  EXPECT_EQ(f_at(m, {1, 1, 1}), 10.0);
  EXPECT_EQ(f_at(m, {-1, 1, 1}), -1.0);
  EXPECT_TRUE(verify_parity_net(m, 3, s, {.exhaustive = true}));
  EXPECT_THROW(build_dnf_six(5, std::vector<std::size_t>{0, 1}), std::invalid_argument);
}

TEST(ThresholdFour, CaseOutputs) {
  const std::vector<std::size_t> s{0, 1, 2};
  const auto m = build_threshold_four(3, s);
  EXPECT_EQ(f_at(m, {-1, -1, -1}), -1.0);  // X = -3
  EXPECT_EQ(f_at(m, {-1, -1, 1}), 1.0);    // X = -1
  EXPECT_EQ(f_at(m, {1, 1, -1}), -1.0);    // X = 1
  EXPECT_EQ(f_at(m, {1, 1, 1}), 1.0);      // X = 3
  EXPECT_EQ(m.u, (std::vector<double>{1, 2, -1, -1}));
  EXPECT_THROW(build_threshold_four(5, std::vector<std::size_t>{0, 1, 2, 3}), std::invalid_argument);
}

TEST(VerifyParityNet, NegatedOutputsFailWithWitness) {
  const std::vector<std::size_t> s{1, 3, 5};
  auto m = build_dnf_six(8, s);
  for (auto& u : m.u) u = -u;
  const auto r = verify_parity_net(m, 8, s);
  EXPECT_FALSE(r.ok);
  ASSERT_EQ(r.counterexample.size(), 8u);
  EXPECT_EQ(sign_of(forward(m, r.counterexample)) == r.expected && r.output != 0.0, false);
}

TEST(VerifyParityNet, ZeroNetFails) {
  const std::vector<std::size_t> s{0, 1};
  EXPECT_FALSE(verify_parity_net(MlpParams(4, 3), 4, s).ok);
}

TEST(VerifyParityNet, ExhaustiveLimit) {
  const std::vector<std::size_t> s{0, 1, 2};
  EXPECT_THROW(verify_parity_net(build_dnf_six(13, s), 13, s, {.exhaustive = true}), std::invalid_argument);
}

TEST(Constructions, ExhaustiveOverSizesAndIndexSets) {
  Rng rng(12);
  for (std::size_t n = 3; n <= 12; ++n) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto s = generate_task(n, 3, rng.next_u64()).indices;
      for (auto kind : {ConstructionKind::dnf_general, ConstructionKind::dnf_six, ConstructionKind::threshold_four}) {
        const auto m = build_construction(kind, n, s);
        EXPECT_EQ(m.p, expected_neurons(kind, 3));
        EXPECT_TRUE(verify_parity_net(m, n, s, {.exhaustive = true})) << to_string(kind) << " n=" << n;
      }
    }
  }
}

TEST(Constructions, OffSupportInvariant) {
  Rng rng(13);
  const std::vector<std::size_t> s{2, 5, 9};
  for (auto kind : {ConstructionKind::dnf_general, ConstructionKind::dnf_six, ConstructionKind::threshold_four}) {
    const auto m = build_construction(kind, 12, s);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> x(12);
      for (auto& v : x) v = rng.coin() ? 1.0 : -1.0;
      const double f = forward(m, x);
      for (std::size_t pos = 0; pos < 12; ++pos) {
        if (pos == 2 || pos == 5 || pos == 9) continue;
        auto y = x;
        y[pos] = -y[pos];
        EXPECT_EQ(forward(m, y), f);
      }
    }
  }
}

TEST(Constructions, ActiveSubnetworkSizes) {
  const std::vector<std::size_t> s{0, 1, 2};
  const auto xs = support_inputs(3, s);
  // Six-neuron net: the smallest-magnitude unit h2 is necessary, so every
  // magnitude prefix short of all six fails. As a plain subset, h3 and h5 are
  // redundant under sign(0) = +1.
  const auto six = build_dnf_six(3, s);
  EXPECT_EQ(smallest_agreeing_subset(six, xs), 4u);
  EXPECT_EQ(active_subnetwork(six, xs).k_min, 6u);
  // Threshold net: the constant unit only matters where f would otherwise be
  // 0, and sign(0) = +1 already matches there, so 3 neurons suffice.
  const auto four = build_threshold_four(3, s);
  EXPECT_EQ(smallest_agreeing_subset(four, xs), 3u);
  EXPECT_EQ(active_subnetwork(four, xs).k_min, 3u);
  // 2^k net: the four parity +1 gates are redundant under sign(0) = +1, but
  // with all magnitudes tied the index order forces keeping gate 0.
  const auto dnf = build_dnf_general(3, s);
  EXPECT_EQ(smallest_agreeing_subset(dnf, xs), 4u);
  EXPECT_EQ(active_subnetwork(dnf, xs).k_min, 8u);
}

TEST(ClassifyCircuit, Labels) {
  EXPECT_EQ(classify_circuit(6, 3), "compact-DNF-like");
  EXPECT_EQ(classify_circuit(8, 3), "full-DNF-like");
  EXPECT_EQ(classify_circuit(4, 3), "threshold-like");
  EXPECT_EQ(classify_circuit(7, 3), "other(7)");
  EXPECT_EQ(classify_circuit(16, 4), "full-DNF-like");
  EXPECT_EQ(classify_circuit(6, 4), "other(6)");
}
