// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ecgjepa/ecg.hpp"
#include "ecgjepa/rng.hpp"

namespace ecgjepa {

using PatchMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// L x N grid of length-t patches. Row (l * N + i) of `patches` holds
/// samples [i t, (i + 1) t) of lead l.
struct PatchGrid {
  int lead_count = 0;
  int patch_count = 0;
  int patch_len = 0;
  /// canonical_position() of each lead; this is the lead index seen by the
  /// positional embedding.
  std::vector<int> lead_positions;
  PatchMatrix patches;
};

/// Splits a record into non-overlapping patches; trailing samples beyond
/// floor(T / t) * t are dropped.
PatchGrid patchify(const EcgRecord& record, int patch_len);

/// Inverse of patchify on the retained samples (lead-major rows of N*t samples).
PatchMatrix unpatchify(const PatchGrid& grid);

/// Partition of the N time indices into masked and visible sets. The same
/// plan applies to every lead.
class MaskPlan {
 public:
  /// Throws ValidationError unless `masked` is a non-empty proper subset of [0, n).
  MaskPlan(int n, std::vector<int> masked);

  int n() const noexcept { return n_; }
  const std::vector<int>& masked() const noexcept { return masked_; }
  const std::vector<int>& visible() const noexcept { return visible_; }
  bool is_masked(int i) const { return flags_.at(static_cast<std::size_t>(i)) != 0; }

  friend bool operator==(const MaskPlan& a, const MaskPlan& b) {
    return a.n_ == b.n_ && a.masked_ == b.masked_;
  }

 private:
  int n_;
  std::vector<int> masked_;
  std::vector<int> visible_;
  std::vector<char> flags_;
};

/// Half-away-from-zero rounding of r * n, clamped to [1, n - 1].
int masked_count_for_ratio(double ratio, int n);

/// Masks round(r n) time indices chosen uniformly without replacement, with r
/// drawn uniformly from [ratio_lo, ratio_hi].
MaskPlan sample_random_mask(int n, double ratio_lo, double ratio_hi, Rng& rng);

/// Union of `freq` contiguous blocks, each of length round(r n) with its own
/// r ~ U[ratio_lo, ratio_hi] and a uniform start. Blocks may overlap. A block
/// that would complete full coverage is redrawn; one that cannot be placed
/// without covering everything is dropped.
MaskPlan sample_multiblock_mask(int n, double ratio_lo, double ratio_hi, int freq, Rng& rng);

struct MaskBlock {
  int start = 0;
  int length = 0;
};

/// The plan together with the blocks that were kept, in draw order.
struct MultiBlockDraw {
  MaskPlan plan;
  std::vector<MaskBlock> blocks;
};

/// sample_multiblock_mask with the kept blocks exposed; same generator use.
MultiBlockDraw draw_multiblock_mask(int n, double ratio_lo, double ratio_hi, int freq, Rng& rng);

/// Token list fed to an encoder: one patch per row with its lead and time
/// position.
struct TokenSet {
  int lead_count = 0;
  int time_count = 0;  // tokens per lead
  PatchMatrix patches;
  std::vector<int> lead_index;
  std::vector<int> time_index;

  std::size_t size() const { return lead_index.size(); }
};

/// Every token of the grid, lead-major.
TokenSet all_tokens(const PatchGrid& grid);

/// Tokens at the plan's visible times, lead-major, ascending time within each
/// lead. Every lead keeps identical time indices.
TokenSet split_visible(const PatchGrid& grid, const MaskPlan& plan);

}  // namespace ecgjepa
