#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "sbx/memory.hpp"
#include "test_util.hpp"

namespace sbx {
namespace {

using testing::TempDir;
using testing::uniform_size;

// Image whose single pixel carries an id, so contents can be compared by value.
Tensor<float> tagged(std::uint64_t id) { return Tensor<float>(Shape{1, 1, 1, 1}, static_cast<float>(id)); }

std::uint64_t tag_of(const ReplaySample& s) { return static_cast<std::uint64_t>(s.image[0]); }

void expect_same(const ReplayMemory& r, const oracle::MemoryOracle& o) {
  ASSERT_EQ(r.size(), o.items.size());
  ASSERT_LE(r.size(), r.capacity());
  for (std::size_t k = 0; k < r.size(); ++k) {
    const auto& s = r.samples()[k];
    const auto& it = o.items[k];
    ASSERT_EQ(tag_of(s), it.id);
    ASSERT_EQ(s.label, it.label);
    ASSERT_EQ(s.importance, it.importance);
    ASSERT_EQ(s.inserted_at, it.inserted_at);
    ASSERT_EQ(s.source, it.source);
  }
  std::map<Label, std::size_t> counts;
  for (const auto& s : r.samples()) ++counts[s.label];
  ASSERT_EQ(counts, r.class_counts());
}

TEST(Replay, InsertIntoEmptyCapacityOne) {
  ReplayMemory r(1);
  EXPECT_FALSE(r.insert(tagged(1), 3).has_value());
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r.samples()[0].importance, 0.0);
  EXPECT_EQ(r.samples()[0].label, 3);
}

TEST(Replay, NewSampleAtStrictMinimumIsEvictedItself) {
  ReplayMemory r(2);
  r.insert_with_importance(tagged(1), 0, 0.5);
  r.insert_with_importance(tagged(2), 1, 0.7);
  auto out = r.insert_with_importance(tagged(3), 0, 0.1);
  ASSERT_TRUE(out.has_value());
  EXPECT_EQ(tag_of(*out), 3u);
  EXPECT_EQ(tag_of(r.samples()[0]), 1u);
  EXPECT_EQ(tag_of(r.samples()[1]), 2u);
}

TEST(Replay, NewSampleStartsAtMeanImportance) {
  ReplayMemory r(10);
  r.insert_with_importance(tagged(1), 0, 0.2);
  r.insert_with_importance(tagged(2), 0, 0.6);
  r.insert(tagged(3), 1);
  EXPECT_DOUBLE_EQ(r.samples()[2].importance, 0.4);
}

TEST(Replay, EvictsArgminImportance) {
  ReplayMemory r(5);
  r.insert_with_importance(tagged(0), 0, 0.5);
  r.insert_with_importance(tagged(1), 1, 0.1);
  r.insert_with_importance(tagged(2), 2, 0.9);
  EXPECT_EQ(r.least_important_index(), 1u);
  EXPECT_EQ(tag_of(r.evict_least_important()), 1u);
}

TEST(Replay, TiesGoToOldestOfLargestClass) {
  ReplayMemory r(10);
  r.insert_with_importance(tagged(0), 1, 0.0);  // class b
  r.insert_with_importance(tagged(1), 0, 0.0);  // class a, oldest a
  r.insert_with_importance(tagged(2), 0, 0.0);
  r.insert_with_importance(tagged(3), 0, 0.0);
  EXPECT_EQ(tag_of(r.evict_least_important()), 1u);
}

TEST(Replay, EvictFromEmptyRejected) {
  ReplayMemory r(3);
  EXPECT_THROW(r.evict_least_important(), std::logic_error);
  EXPECT_THROW(ReplayMemory(0), std::invalid_argument);
}

TEST(Replay, ImportanceUpdateRule) {
  ReplayMemory r(4);
  r.insert_with_importance(tagged(0), 0, 0.0);
  const std::vector<std::size_t> idx{0};
  r.update_importance(idx, std::vector<double>{1.0}, std::vector<double>{0.7}, 1.0);
  EXPECT_DOUBLE_EQ(r.samples()[0].importance, 0.3);
  // unchanged loss decays toward zero
  r.update_importance(idx, std::vector<double>{1.0}, std::vector<double>{1.0}, 0.5);
  EXPECT_DOUBLE_EQ(r.samples()[0].importance, 0.15);
  EXPECT_THROW(r.update_importance(std::vector<std::size_t>{3}, std::vector<double>{1.0}, std::vector<double>{1.0}, 0.1),
               std::out_of_range);
  EXPECT_THROW(r.update_importance(idx, std::vector<double>{1.0}, std::vector<double>{1.0}, 0.0), std::invalid_argument);
}

// Geometric series: after n updates with constant decrease delta from 0,
// importance = delta (1 - (1 - beta)^n).
TEST(Replay, ConstantDecreaseConvergesToDelta) {
  ReplayMemory r(1);
  r.insert(tagged(0), 0);
  const double beta = 0.1, delta = 0.25;
  const std::vector<std::size_t> idx{0};
  for (int n = 1; n <= 200; ++n) {
    r.update_importance(idx, std::vector<double>{1.0 + delta}, std::vector<double>{1.0}, beta);
    ASSERT_NEAR(r.samples()[0].importance, delta * (1.0 - std::pow(1.0 - beta, n)), 1e-12);
  }
  EXPECT_NEAR(r.samples()[0].importance, delta, 1e-9);
}

TEST(Replay, SourceRowsAreStoredOnce) {
  ReplayMemory r(4);
  r.insert(tagged(1), 0, 7);
  EXPECT_FALSE(r.insert(tagged(2), 0, 7).has_value());
  EXPECT_EQ(r.size(), 1u);
  EXPECT_TRUE(r.contains_source(7));
  r.insert(tagged(3), 1);
  r.insert(tagged(4), 1);
  EXPECT_EQ(r.size(), 3u);
  r.evict_least_important();
  r.evict_least_important();
  r.evict_least_important();
  EXPECT_FALSE(r.contains_source(7));
  r.insert(tagged(5), 0, 7);
  EXPECT_EQ(r.size(), 1u);
}

// Randomized traces of inserts, importance updates and evictions checked
// against the full-scan oracle after every event.
TEST(Replay, RandomTracesMatchOracle) {
  for (std::size_t capacity : {1u, 3u, 10u, 50u}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed * 97 + capacity);
      ReplayMemory r(capacity);
      oracle::MemoryOracle o{capacity, {}, 0};
      std::uint64_t next_id = 0;
      for (int event = 0; event < 600; ++event) {
        const std::size_t kind = uniform_size(rng, 0, 9);
        if (kind < 6 || r.empty()) {
          const int label = static_cast<int>(uniform_size(rng, 0, 4));
          std::optional<std::uint64_t> source;
          if (uniform_size(rng, 0, 1)) source = uniform_size(rng, 0, 3 * capacity);
          std::optional<double> imp;
          // Coarse importances make ties common so the tie-break paths are exercised.
          if (kind < 2) imp = static_cast<double>(uniform_size(rng, 0, 3)) * 0.25;
          const std::uint64_t id = next_id++;
          if (imp) {
            r.insert_with_importance(tagged(id), static_cast<Label>(label), *imp, source);
          } else {
            r.insert(tagged(id), static_cast<Label>(label), source);
          }
          o.insert(id, label, source, imp);
        } else if (kind < 9) {
          std::vector<std::size_t> idx;
          std::vector<double> before, after;
          const std::size_t k = uniform_size(rng, 1, r.size());
          for (std::size_t q = 0; q < k; ++q) {
            idx.push_back(uniform_size(rng, 0, r.size() - 1));
            before.push_back(static_cast<double>(uniform_size(rng, 0, 4)) * 0.5);
            after.push_back(static_cast<double>(uniform_size(rng, 0, 4)) * 0.5);
          }
          r.update_importance(idx, before, after, 0.5);
          o.update(idx, before, after, 0.5);
        } else {
          const std::size_t v = o.victim();
          EXPECT_EQ(r.least_important_index(), v);
          EXPECT_EQ(tag_of(r.evict_least_important()), o.items[v].id);
          o.items.erase(o.items.begin() + static_cast<std::ptrdiff_t>(v));
        }
        expect_same(r, o);
        if (::testing::Test::HasFatalFailure()) return;
      }
    }
  }
}

TEST(Replay, SaveLoadRoundTrip) {
  TempDir dir("replay");
  ReplayMemory r(5);
  for (std::uint64_t i = 0; i < 7; ++i) {
    r.insert_with_importance(Tensor<float>(Shape{1, 2, 2, 1}, static_cast<float>(i)), static_cast<Label>(i % 3),
                             0.1 * static_cast<double>(i % 4), i % 2 ? std::optional<std::uint64_t>(i) : std::nullopt);
  }
  r.save(dir.path() / "r.sbds", dir.path() / "r.csv", 3);
  auto back = ReplayMemory::load(dir.path() / "r.sbds", dir.path() / "r.csv", 5);
  ASSERT_EQ(back.size(), r.size());
  for (std::size_t k = 0; k < r.size(); ++k) {
    EXPECT_EQ(back.samples()[k].image, r.samples()[k].image);
    EXPECT_EQ(back.samples()[k].label, r.samples()[k].label);
    EXPECT_DOUBLE_EQ(back.samples()[k].importance, r.samples()[k].importance);
    EXPECT_EQ(back.samples()[k].inserted_at, r.samples()[k].inserted_at);
    EXPECT_EQ(back.samples()[k].source, r.samples()[k].source);
  }
  EXPECT_EQ(back.element_count(), r.element_count());
  EXPECT_THROW(ReplayMemory::load(dir.path() / "r.sbds", dir.path() / "r.csv", 2), std::invalid_argument);
}

SBDBatch make_batch(std::uint32_t task, std::vector<Label> labels, float base) {
  SBDBatch b;
  b.features = Tensor<float>(Shape{labels.size(), 2, 1, 1});
  for (std::size_t i = 0; i < b.features.numel(); ++i) b.features[i] = base + static_cast<float>(i);
  b.labels = std::move(labels);
  b.task_id = task;
  return b;
}

TEST(SbdMemory, UnboundedAppendKeepsEverything) {
  SBDMemory e;
  e.append(make_batch(0, {0, 1, 2}, 0));
  e.append(make_batch(1, {3, 4}, 10));
  EXPECT_EQ(e.size(), 5u);
  EXPECT_EQ(e.count_task(0), 3u);
  EXPECT_EQ(e.count_task(1), 2u);
  EXPECT_EQ(e.element_count(), 10u);
  EXPECT_EQ(e.gather_features(std::vector<std::size_t>{3}).vec(), (std::vector<float>{10, 11}));
}

TEST(SbdMemory, BudgetKeepsTopImportanceEntries) {
  std::mt19937_64 rng(3);
  SBDMemory e(100);
  std::vector<Label> first(100, 0), second(50, 1);
  e.append(make_batch(0, first, 0));
  // Give the first 100 random importances, then append 50 more at the mean.
  std::vector<std::size_t> idx(100);
  std::vector<double> before(100), after(100, 0.0);
  for (std::size_t i = 0; i < 100; ++i) {
    idx[i] = i;
    before[i] = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  }
  e.update_importance(idx, before, after, 1.0);
  std::vector<std::pair<double, std::uint64_t>> all;
  for (const auto& x : e.entries()) all.push_back({x.importance, x.inserted_at});
  const double mean = e.mean_importance();
  for (std::uint64_t k = 0; k < 50; ++k) all.push_back({mean, 100 + k});
  e.append(make_batch(1, second, 1000));
  ASSERT_EQ(e.size(), 100u);
  // Oracle: sort by (importance, age) and drop the 50 smallest.
  std::sort(all.begin(), all.end());
  std::vector<std::uint64_t> keep;
  for (std::size_t k = 50; k < all.size(); ++k) keep.push_back(all[k].second);
  std::sort(keep.begin(), keep.end());
  std::vector<std::uint64_t> got;
  for (const auto& x : e.entries()) got.push_back(x.inserted_at);
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, keep);
}

TEST(SbdMemory, ReplaceTaskEntriesTouchesOnlyThatTask) {
  SBDMemory e;
  e.append(make_batch(0, {0, 1}, 0));
  e.append(make_batch(1, {2, 3, 4}, 10));
  const auto task1 = e.gather_features(std::vector<std::size_t>{2, 3, 4});
  e.replace_task_entries(0, {make_batch(0, {0, 1}, 100)});
  EXPECT_EQ(e.size(), 5u);
  EXPECT_EQ(e.count_task(0), 2u);
  std::vector<std::size_t> t0, t1;
  for (std::size_t k = 0; k < e.size(); ++k) (e.entries()[k].task_id == 0 ? t0 : t1).push_back(k);
  EXPECT_EQ(e.gather_features(t1), task1);
  EXPECT_EQ(e.gather_features(t0).vec()[0], 100.0f);
  EXPECT_THROW(e.replace_task_entries(0, {make_batch(1, {0}, 0)}), std::invalid_argument);
}

TEST(SbdMemory, EncodeDecodeRoundTripAndTruncation) {
  SBDMemory e;
  e.append(make_batch(0, {0, 1}, 0));
  e.append(make_batch(3, {9}, 5));
  const auto bytes = e.encode();
  auto back = SBDMemory::decode(bytes);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(back.entries()[k].feature, e.entries()[k].feature);
    EXPECT_EQ(back.entries()[k].label, e.entries()[k].label);
    EXPECT_EQ(back.entries()[k].task_id, e.entries()[k].task_id);
  }
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  EXPECT_THROW(SBDMemory::decode(cut), std::runtime_error);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(SBDMemory::decode(bad), std::runtime_error);
}

}  // namespace
}  // namespace sbx
