#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "qvic/error.hpp"
#include "qvic/memory.hpp"
#include "qvic/rng.hpp"

using namespace qvic;

namespace {

MemoryEntry entry(FrameId f, double r) { return {Matrix(1, 2, static_cast<double>(f)), r, f, 0}; }

}  // namespace

TEST(Memory, PrunesSmallestRelevance) {
  ContextMemory m(2);
  m.append(entry(1, 0.9));
  m.append(entry(2, 0.1));
  const auto rep = m.append(entry(3, 0.5));
  ASSERT_TRUE(rep.pruned.has_value());
  EXPECT_EQ(rep.pruned->frame_index, 2u);
  EXPECT_EQ(m.frame_indices(), (std::vector<FrameId>{1, 3}));
}

TEST(Memory, TiesPruneTheOldestFrame) {
  ContextMemory m(2);
  m.append(entry(1, 0.5));
  m.append(entry(2, 0.5));
  EXPECT_EQ(m.append(entry(3, 0.5)).pruned->frame_index, 1u);
}

TEST(Memory, NewEntryCanBeItsOwnVictim) {
  ContextMemory m(1);
  m.append(entry(1, 0.9));
  EXPECT_EQ(m.append(entry(2, 0.2)).pruned->frame_index, 2u);
  EXPECT_EQ(m.frame_indices(), (std::vector<FrameId>{1}));
}

TEST(Memory, RejectsDuplicatesAndBadRelevance) {
  ContextMemory m(4);
  m.append(entry(1, 0.5));
  EXPECT_THROW(m.append(entry(1, 0.6)), ContractViolation);
  EXPECT_THROW(m.append(entry(2, 1.5)), ContractViolation);
  EXPECT_THROW(m.append(entry(3, -0.1)), ContractViolation);
  EXPECT_THROW(ContextMemory(0), ConfigError);
}

TEST(Memory, UpdateSlotInPlace) {
  ContextMemory m(2);
  m.append(entry(1, 0.6));
  m.append(entry(3, 0.5));
  const auto u = m.update_slot(3, Matrix(1, 2, 7.0), 0.7);
  EXPECT_EQ(u.old_relevance, 0.5);
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(m.append(entry(4, 0.65)).pruned->frame_index, 1u);
  EXPECT_THROW(m.update_slot(99, Matrix(1, 2), 0.1), NotFoundError);
  // Identical values leave the bank unchanged.
  const std::vector<MemoryEntry> before(m.entries().begin(), m.entries().end());
  m.update_slot(3, Matrix(1, 2, 7.0), 0.7);
  ASSERT_EQ(m.size(), before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(m.entries()[i].embedding, before[i].embedding);
    EXPECT_EQ(m.entries()[i].relevance, before[i].relevance);
  }
}

TEST(Memory, RecallTopThenTemporalOrder) {
  ContextMemory m(8);
  m.append(entry(7, 0.95));
  m.append(entry(1, 0.8));
  m.append(entry(3, 0.9));
  EXPECT_EQ(m.recall(2), (std::vector<FrameId>{3, 7}));
  EXPECT_EQ(m.recall(10), (std::vector<FrameId>{1, 3, 7}));
  EXPECT_TRUE(ContextMemory(3).recall(2).empty());
  ContextMemory ties(8);
  ties.append(entry(2, 0.5));
  ties.append(entry(5, 0.5));
  ties.append(entry(4, 0.5));
  EXPECT_EQ(ties.recall(2), (std::vector<FrameId>{4, 5}));
}

TEST(Memory, SnapshotIsFrameSorted) {
  ContextMemory m(8);
  for (FrameId f : {5, 2, 9}) m.append(entry(f, 0.5));
  const auto snap = m.snapshot_for_decoder();
  ASSERT_EQ(snap.size(), 3u);
  EXPECT_EQ(snap[0](0, 0), 2.0);
  EXPECT_EQ(snap[1](0, 0), 5.0);
  EXPECT_EQ(snap[2](0, 0), 9.0);
  EXPECT_TRUE(ContextMemory(2).snapshot_for_decoder().empty());
}

TEST(RetentionPolicies, FifoAndUniform) {
  ContextMemory fifo(2, RetentionPolicy::fifo());
  fifo.append(entry(1, 0.9));
  fifo.append(entry(2, 0.1));
  EXPECT_EQ(fifo.append(entry(3, 0.5)).pruned->frame_index, 1u);

  const auto uniform = RetentionPolicy::uniform_budget(10, 4);
  for (FrameId f : {2, 4, 7, 9}) EXPECT_TRUE(uniform.uniform_targets().count(f)) << f;
  ContextMemory m(4, uniform);
  for (FrameId f = 1; f <= 10; ++f) m.append(entry(f, 0.5));
  EXPECT_EQ(m.frame_indices(), (std::vector<FrameId>{2, 4, 7, 9}));
}

TEST(Memory, FuzzedOperationsKeepInvariants) {
  Rng rng(1234);
  for (int run = 0; run < 5; ++run) {
    const std::size_t cap = 1 + rng.below(12);
    ContextMemory m(cap);
    std::map<FrameId, double> model;
    FrameId next = 1;
    std::size_t inserts = 0, prunes = 0;
    for (int op = 0; op < 2000; ++op) {
      const auto kind = rng.below(3);
      if (kind == 0 || model.empty()) {
        const double r = std::floor(rng.uniform() * 8.0) / 8.0;  // coarse, to force ties
        const FrameId f = next++;
        model[f] = r;
        ++inserts;
        const auto rep = m.append(entry(f, r));
        if (model.size() > cap) {
          ASSERT_TRUE(rep.pruned.has_value());
          ++prunes;
          const auto victim = std::min_element(model.begin(), model.end(), [](auto& a, auto& b) {
            return a.second < b.second || (a.second == b.second && a.first < b.first);
          });
          ASSERT_EQ(rep.pruned->frame_index, victim->first);
          model.erase(victim);
        } else {
          ASSERT_FALSE(rep.pruned.has_value());
        }
      } else if (kind == 1) {
        auto it = model.begin();
        std::advance(it, static_cast<long>(rng.below(model.size())));
        const double r = rng.uniform();
        m.update_slot(it->first, Matrix(1, 2), r);
        it->second = r;
      } else {
        const std::size_t k = rng.below(cap + 2);
        const auto got = m.recall(k);
        std::vector<std::pair<double, FrameId>> ranked;
        for (auto& [f, r] : model) ranked.push_back({r, f});
        std::sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) {
          return a.first > b.first || (a.first == b.first && a.second > b.second);
        });
        std::vector<FrameId> want;
        for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) want.push_back(ranked[i].second);
        std::sort(want.begin(), want.end());
        ASSERT_EQ(got, want);
      }
      ASSERT_LE(m.size(), cap);
      ASSERT_EQ(m.size(), model.size());
    }
    EXPECT_EQ(prunes, inserts > cap ? inserts - m.size() : 0u);
  }
}
