// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/patching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecgjepa/error.hpp"

namespace ecgjepa {
namespace {

void check_ratio(double lo, double hi, int n) {
  if (!(lo > 0.0 && lo <= hi && hi < 1.0)) {
    throw ValidationError("mask ratio must satisfy 0 < lo <= hi < 1");
  }
  if (n < 2) throw ValidationError("mask sampling needs n >= 2");
}

}  // namespace

PatchGrid patchify(const EcgRecord& record, int patch_len) {
  if (patch_len < 1) throw ValidationError("patchify: patch_len must be >= 1");
  const auto total = static_cast<int>(record.sample_count());
  if (total < patch_len) {
    throw ValidationError("patchify: record has " + std::to_string(total) + " samples, fewer than patch_len " +
                          std::to_string(patch_len));
  }
  PatchGrid grid;
  grid.lead_count = static_cast<int>(record.lead_count());
  grid.patch_count = total / patch_len;
  grid.patch_len = patch_len;
  for (Lead lead : record.leads()) grid.lead_positions.push_back(canonical_position(lead));
  grid.patches.resize(grid.lead_count * grid.patch_count, patch_len);
  const auto& s = record.samples();
  for (int l = 0; l < grid.lead_count; ++l) {
    for (int i = 0; i < grid.patch_count; ++i) {
      grid.patches.row(l * grid.patch_count + i) = s.row(l).segment(i * patch_len, patch_len);
    }
  }
  return grid;
}

PatchMatrix unpatchify(const PatchGrid& grid) {
  PatchMatrix out(grid.lead_count, grid.patch_count * grid.patch_len);
  for (int l = 0; l < grid.lead_count; ++l) {
    for (int i = 0; i < grid.patch_count; ++i) {
      out.row(l).segment(i * grid.patch_len, grid.patch_len) = grid.patches.row(l * grid.patch_count + i);
    }
  }
  return out;
}

MaskPlan::MaskPlan(int n, std::vector<int> masked) : n_(n), masked_(std::move(masked)) {
  if (n_ < 1) throw ValidationError("MaskPlan: n must be >= 1");
  std::sort(masked_.begin(), masked_.end());
  if (std::adjacent_find(masked_.begin(), masked_.end()) != masked_.end()) {
    throw ValidationError("MaskPlan: duplicate masked index");
  }
  flags_.assign(static_cast<std::size_t>(n_), 0);
  for (int i : masked_) {
    if (i < 0 || i >= n_) throw ValidationError("MaskPlan: masked index out of range");
    flags_[static_cast<std::size_t>(i)] = 1;
  }
  for (int i = 0; i < n_; ++i) {
    if (!flags_[static_cast<std::size_t>(i)]) visible_.push_back(i);
  }
  if (masked_.empty()) throw ValidationError("MaskPlan: at least one index must be masked");
  if (visible_.empty()) throw ValidationError("MaskPlan: at least one index must be visible");
}

int masked_count_for_ratio(double ratio, int n) {
  const auto m = static_cast<int>(std::round(ratio * n));
  return std::clamp(m, 1, n - 1);
}

MaskPlan sample_random_mask(int n, double ratio_lo, double ratio_hi, Rng& rng) {
  check_ratio(ratio_lo, ratio_hi, n);
  const int m = masked_count_for_ratio(rng.uniform(ratio_lo, ratio_hi), n);
  // Partial Fisher-Yates: the first m entries are a uniform m-subset.
  std::vector<int> pool(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < m; ++i) {
    const auto j = i + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(m));
  return MaskPlan(n, std::move(pool));
}

MultiBlockDraw draw_multiblock_mask(int n, double ratio_lo, double ratio_hi, int freq, Rng& rng) {
  check_ratio(ratio_lo, ratio_hi, n);
  if (freq < 1) throw ValidationError("multi-block mask needs freq >= 1");
  const int min_len = masked_count_for_ratio(ratio_lo, n);
  std::vector<char> covered(static_cast<std::size_t>(n), 0);
  std::vector<MaskBlock> blocks;
  for (int b = 0; b < freq; ++b) {
    // A block of length len leaves index u uncovered for some start iff
    // u >= len or u <= n - 1 - len; if no uncovered index qualifies even for
    // the shortest admissible block, the block cannot be placed and is skipped.
    bool feasible = false;
    for (int u = 0; u < n && !feasible; ++u) {
      feasible = !covered[static_cast<std::size_t>(u)] && (u >= min_len || u <= n - 1 - min_len);
    }
    if (!feasible) break;
    for (;;) {
      const int len = masked_count_for_ratio(rng.uniform(ratio_lo, ratio_hi), n);
      const auto start = static_cast<int>(rng.uniform_int(0, n - len));
      auto trial = covered;
      std::fill_n(trial.begin() + start, len, 1);
      if (std::find(trial.begin(), trial.end(), 0) != trial.end()) {
        covered = std::move(trial);
        blocks.push_back({start, len});
        break;
      }
    }
  }
  std::vector<int> masked;
  for (int i = 0; i < n; ++i) {
    if (covered[static_cast<std::size_t>(i)]) masked.push_back(i);
  }
  return {MaskPlan(n, std::move(masked)), std::move(blocks)};
}

MaskPlan sample_multiblock_mask(int n, double ratio_lo, double ratio_hi, int freq, Rng& rng) {
  return draw_multiblock_mask(n, ratio_lo, ratio_hi, freq, rng).plan;
}

TokenSet all_tokens(const PatchGrid& grid) {
  TokenSet tokens;
  tokens.lead_count = grid.lead_count;
  tokens.time_count = grid.patch_count;
  tokens.patches = grid.patches;
  for (int l = 0; l < grid.lead_count; ++l) {
    for (int i = 0; i < grid.patch_count; ++i) {
      tokens.lead_index.push_back(grid.lead_positions[static_cast<std::size_t>(l)]);
      tokens.time_index.push_back(i);
    }
  }
  return tokens;
}

TokenSet split_visible(const PatchGrid& grid, const MaskPlan& plan) {
  if (plan.n() != grid.patch_count) {
    throw ValidationError("split_visible: plan covers " + std::to_string(plan.n()) + " time indices but grid has " +
                          std::to_string(grid.patch_count));
  }
  const auto& visible = plan.visible();
  const int q = static_cast<int>(visible.size());
  TokenSet tokens;
  tokens.lead_count = grid.lead_count;
  tokens.time_count = q;
  tokens.patches.resize(grid.lead_count * q, grid.patch_len);
  for (int l = 0; l < grid.lead_count; ++l) {
    for (int k = 0; k < q; ++k) {
      tokens.patches.row(l * q + k) = grid.patches.row(l * grid.patch_count + visible[static_cast<std::size_t>(k)]);
      tokens.lead_index.push_back(grid.lead_positions[static_cast<std::size_t>(l)]);
      tokens.time_index.push_back(visible[static_cast<std::size_t>(k)]);
    }
  }
  return tokens;
}

}  // namespace ecgjepa
