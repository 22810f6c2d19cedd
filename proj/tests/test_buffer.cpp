#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "lnd/buffer.hpp"
#include "lnd/rng.hpp"

namespace {

using lnd::DemoBuffer;
using lnd::Rng;
using lnd::Source;
using lnd::TransitionRecord;

DemoBuffer chained_corpus(int episodes, int horizon) {
  // States encode (episode, t) so chain structure is verifiable.
  DemoBuffer b;
  b.state_dim = 2;
  b.action_dim = 1;
  b.horizon = horizon;
  b.source = Source::kExpert;
  for (int ep = 0; ep < episodes; ++ep)
    for (int t = 0; t < horizon; ++t) {
      TransitionRecord rec;
      rec.s = {double(ep), double(t)};
      rec.a = {0.5};
      rec.s_next = {double(ep), double(t + 1)};
      rec.r = -1.0;
      rec.episode = ep;
      rec.t = t;
      b.records.push_back(std::move(rec));
    }
  return b;
}

TEST(Jsonl, RoundTripPreservesEverything) {
  DemoBuffer b = chained_corpus(2, 3);
  b.records[0].r.reset();  // missing reward must survive the trip
  std::string text = buffer_to_jsonl(b);
  DemoBuffer back = lnd::buffer_from_jsonl(text);
  EXPECT_EQ(back.state_dim, b.state_dim);
  EXPECT_EQ(back.action_dim, b.action_dim);
  EXPECT_EQ(back.horizon, b.horizon);
  EXPECT_EQ(back.source, b.source);
  EXPECT_EQ(back.noisy, b.noisy);
  ASSERT_EQ(back.size(), b.size());
  EXPECT_FALSE(back.records[0].r.has_value());
  for (int i = 0; i < b.size(); ++i) {
    EXPECT_EQ(back.records[i].s, b.records[i].s);
    EXPECT_EQ(back.records[i].a, b.records[i].a);
    EXPECT_EQ(back.records[i].s_next, b.records[i].s_next);
    EXPECT_EQ(back.records[i].episode, b.records[i].episode);
    EXPECT_EQ(back.records[i].t, b.records[i].t);
  }
}

TEST(Jsonl, FileRoundTrip) {
  DemoBuffer b = chained_corpus(1, 4);
  std::string path = testing::TempDir() + "/corpus.jsonl";
  save_buffer(path, b);
  DemoBuffer back = lnd::load_buffer(path);
  EXPECT_EQ(back.size(), 4);
  EXPECT_EQ(back.records[3].s_next, b.records[3].s_next);
}

TEST(Jsonl, ParseErrorsCarryLineNumbers) {
  DemoBuffer b = chained_corpus(1, 2);
  std::string text = buffer_to_jsonl(b);

  // Corrupt the third line (second record).
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    lines.push_back(text.substr(pos, nl - pos));
    pos = (nl == std::string::npos) ? text.size() : nl + 1;
  }
  ASSERT_EQ(lines.size(), 3u);
  lines[2] = "{not json";
  std::string bad = lines[0] + "\n" + lines[1] + "\n" + lines[2] + "\n";
  try {
    lnd::buffer_from_jsonl(bad);
    FAIL() << "expected ParseError";
  } catch (const lnd::ParseError& e) {
    EXPECT_EQ(e.line, 3);
  }

  // Missing header entirely.
  std::string headless = lines[1] + "\n";
  EXPECT_THROW(lnd::buffer_from_jsonl(headless), lnd::ParseError);
  EXPECT_THROW(lnd::buffer_from_jsonl(""), lnd::ParseError);
}

TEST(Jsonl, DimensionMismatchRejected) {
  DemoBuffer b = chained_corpus(1, 2);
  b.records[1].s.push_back(9.0);
  EXPECT_THROW(b.validate(), lnd::ShapeError);
}

TEST(AnchorShuffle, PermutesRecordsAndRechains) {
  DemoBuffer in = chained_corpus(2, 5);
  Rng rng(31);
  DemoBuffer out = anchor_shuffle(in, rng);
  EXPECT_EQ(out.source, Source::kAnchor);
  ASSERT_EQ(out.size(), in.size());

  // The multiset of (s, a) pairs is preserved: shuffling moves whole
  // records, it does not invent data.
  std::multiset<std::pair<double, double>> in_keys, out_keys;
  for (const auto& r : in.records) in_keys.insert({r.s[0], r.s[1]});
  for (const auto& r : out.records) out_keys.insert({r.s[0], r.s[1]});
  EXPECT_EQ(in_keys, out_keys);

  // Consecutive output records chain: out[k].s_next is out[k+1].s, with
  // wrap-around at the end.
  const int n = out.size();
  for (int k = 0; k < n; ++k) {
    EXPECT_EQ(out.records[k].s_next, out.records[(k + 1) % n].s);
  }

  // Bookkeeping fields are rebuilt against the output ordering.
  const int h = in.horizon;
  for (int k = 0; k < n; ++k) {
    EXPECT_EQ(out.records[k].episode, k / h);
    EXPECT_EQ(out.records[k].t, k % h);
    EXPECT_GE(out.records[k].t, 0);
    EXPECT_LT(out.records[k].t, h);
  }
}

TEST(AnchorShuffle, AdjacencySurvivalMatchesRandomPermutationRate) {
  // For a uniformly random cyclic re-chaining of n records, the chance
  // that a given original adjacency (i followed by i+1) survives is
  // 1/(n-1). Monte Carlo over many shuffles should land near that.
  const int n = 100;
  DemoBuffer in = chained_corpus(1, n);
  const int trials = 4000;
  double total = 0.0;
  Rng rng(202);
  for (int trial = 0; trial < trials; ++trial) {
    DemoBuffer out = anchor_shuffle(in, rng);
    int preserved = 0;
    for (int k = 0; k < n; ++k) {
      // Original successor of the record now at slot k.
      if (out.records[k].s_next[1] == out.records[k].s[1] + 1.0) ++preserved;
    }
    total += double(preserved) / double(n - 1);
  }
  double mean = total / trials;
  // se = sqrt(p(1-p)/((n-1) trials)) ~ 1.6e-4; allow five sigma.
  EXPECT_NEAR(mean, 1.0 / (n - 1), 8e-4);
}

TEST(Sampling, WithoutReplacementIsExactPermutationAtFullSize) {
  Rng rng(5);
  std::vector<int> idx = lnd::sample_indices(6, 6, rng);
  std::set<int> seen(idx.begin(), idx.end());
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_EQ(*seen.begin(), 0);
  EXPECT_EQ(*seen.rbegin(), 5);

  std::vector<int> part = lnd::sample_indices(10, 4, rng);
  std::set<int> ps(part.begin(), part.end());
  EXPECT_EQ(ps.size(), 4u);
  for (int i : part) {
    EXPECT_GE(i, 0);
    EXPECT_LT(i, 10);
  }

  EXPECT_THROW(lnd::sample_indices(3, 4, rng), lnd::SamplingError);
  EXPECT_THROW(lnd::sample_indices(3, 0, rng), lnd::SamplingError);
}

TEST(Sampling, TripleSharesIndicesBetweenExpertAndAnchor) {
  DemoBuffer expert = chained_corpus(2, 10);
  DemoBuffer anchor = chained_corpus(3, 10);
  DemoBuffer imit = chained_corpus(4, 10);
  Rng rng(8);
  lnd::TripleIndices tri = lnd::sample_triple(expert, anchor, imit, 12, rng);
  ASSERT_EQ(tri.shared.size(), 12u);
  ASSERT_EQ(tri.imitator.size(), 12u);
  std::set<int> shared_set(tri.shared.begin(), tri.shared.end());
  EXPECT_EQ(shared_set.size(), 12u);  // without replacement
  for (int i : tri.shared) {
    EXPECT_GE(i, 0);
    EXPECT_LT(i, 20);  // min(|E|, |A|)
  }
  for (int i : tri.imitator) {
    EXPECT_GE(i, 0);
    EXPECT_LT(i, 40);
  }

  lnd::Matrix s = gather_states(expert, tri.shared);
  lnd::Matrix sn = gather_next_states(expert, tri.shared);
  lnd::Matrix a = gather_actions(expert, tri.shared);
  ASSERT_EQ(s.rows, 12);
  ASSERT_EQ(s.cols, 2);
  ASSERT_EQ(a.cols, 1);
  for (int r = 0; r < 12; ++r) {
    const auto& rec = expert.records[tri.shared[static_cast<std::size_t>(r)]];
    EXPECT_EQ(s[r][0], rec.s[0]);
    EXPECT_EQ(sn[r][1], rec.s_next[1]);
    EXPECT_EQ(a[r][0], rec.a[0]);
  }
}

}  // namespace
