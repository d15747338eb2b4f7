#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "rqre/env.hpp"

namespace rqre {

namespace {

constexpr int kGrid = 9;
constexpr int kActions = 6;  // north, south, west, east, stay, interact
constexpr int kActInteract = 5;
constexpr int kObsDim = 15;
constexpr int kFeatureDim = 200;
constexpr int kCrossObs = 11;  // positions, distances, inventory bits

constexpr int kInvNone = 0, kInvStag = 1, kInvHare = 2;

struct Tile {
  int r, c;
};
constexpr std::array<Tile, 4> kStagTiles{{{0, 0}, {0, 8}, {8, 0}, {8, 8}}};
constexpr std::array<Tile, 4> kHareTiles{{{3, 1}, {5, 1}, {3, 7}, {5, 7}}};
constexpr std::array<Tile, 2> kSpawns{{{4, 0}, {4, 8}}};

// State layout: [r0 c0 r1 c1 inv0 inv1 | stag bits x4 | hare bits x4 | t]
constexpr int kIdxInv0 = 4, kIdxInv1 = 5, kIdxStagBits = 6, kIdxHareBits = 10,
              kIdxTime = 14, kStateDim = 15;

int manhattan(int r0, int c0, int r1, int c1) {
  return std::abs(r0 - r1) + std::abs(c0 - c1);
}

class StagHuntGridEnv final : public Environment {
 public:
  explicit StagHuntGridEnv(const GridConfig& cfg) : horizon_(cfg.horizon) {
    if (horizon_ <= 0 || horizon_ > 75)
      throw std::invalid_argument("grid stag hunt: horizon must be in [1,75]");
    spec_.n = 2;
    spec_.action_counts = {kActions, kActions};
    spec_.horizon = horizon_;
    spec_.feature_dim = kFeatureDim;
    spec_.reward_min = 0.0;
    spec_.reward_max = 4.0;
    spec_.generative = false;
    calibrate_norm(cfg.feature_probe_seed);
  }

  const EnvSpec& spec() const override { return spec_; }

  State initial_state(Rng&) const override {
    State s(kStateDim, 0.0);
    s[0] = kSpawns[0].r;
    s[1] = kSpawns[0].c;
    s[2] = kSpawns[1].r;
    s[3] = kSpawns[1].c;
    for (int k = 0; k < 4; ++k) {
      s[kIdxStagBits + k] = 1.0;
      s[kIdxHareBits + k] = 1.0;
    }
    return s;
  }

  StepResult step(const State& s, int, std::span<const int> joint, Rng& rng) const override {
    StepResult out;
    out.rewards = {0.0, 0.0};
    State ns = s;

    std::array<int, 2> pr{int(s[0]), int(s[2])}, pc{int(s[1]), int(s[3])};
    std::array<int, 2> prev_r = pr, prev_c = pc;
    for (int a = 0; a < 2; ++a) {
      switch (joint[a]) {
        case 0: pr[a] = std::max(0, pr[a] - 1); break;
        case 1: pr[a] = std::min(kGrid - 1, pr[a] + 1); break;
        case 2: pc[a] = std::max(0, pc[a] - 1); break;
        case 3: pc[a] = std::min(kGrid - 1, pc[a] + 1); break;
        default: break;  // stay / interact
      }
    }

    auto resource_at = [&](int r, int c) -> int {
      for (int k = 0; k < 4; ++k)
        if (ns[kIdxStagBits + k] > 0.5 && kStagTiles[k].r == r && kStagTiles[k].c == c)
          return kIdxStagBits + k;
      for (int k = 0; k < 4; ++k)
        if (ns[kIdxHareBits + k] > 0.5 && kHareTiles[k].r == r && kHareTiles[k].c == c)
          return kIdxHareBits + k;
      return -1;
    };
    auto place_resource = [&](int type, int r, int c) {
      const auto& tiles = type == kInvStag ? kStagTiles : kHareTiles;
      const int base = type == kInvStag ? kIdxStagBits : kIdxHareBits;
      for (int k = 0; k < 4; ++k)
        if (tiles[k].r == r && tiles[k].c == c && ns[base + k] < 0.5) {
          ns[base + k] = 1.0;
          return;
        }
      // The vacated tile is not one of this type's tiles (or is occupied);
      // the carried resource is consumed.
    };

    for (int a = 0; a < 2; ++a) {
      const int inv_idx = a == 0 ? kIdxInv0 : kIdxInv1;
      const int slot = resource_at(pr[a], pc[a]);
      if (slot < 0) continue;
      const int type = slot >= kIdxHareBits ? kInvHare : kInvStag;
      const int inv = int(ns[inv_idx]);
      if (inv == kInvNone) {
        ns[inv_idx] = type;
        ns[slot] = 0.0;
      } else if (inv != type) {
        ns[inv_idx] = type;
        ns[slot] = 0.0;
        place_resource(inv, prev_r[a], prev_c[a]);
      }
    }

    const bool any_interact = joint[0] == kActInteract || joint[1] == kActInteract;
    const bool adjacent = manhattan(pr[0], pc[0], pr[1], pc[1]) <= 1;
    const int inv0 = int(ns[kIdxInv0]), inv1 = int(ns[kIdxInv1]);
    if (any_interact && adjacent && inv0 != kInvNone && inv1 != kInvNone) {
      if (inv0 == kInvStag && inv1 == kInvStag) {
        out.rewards = {4.0, 4.0};
        out.event = kEventStagStag;
      } else if (inv0 == kInvHare && inv1 == kInvHare) {
        out.rewards = {2.0, 2.0};
        out.event = kEventHareHare;
      } else {
        out.rewards[0] = inv0 == kInvHare ? 2.0 : 0.0;
        out.rewards[1] = inv1 == kInvHare ? 2.0 : 0.0;
        out.event = kEventMixed;
      }
      for (int a = 0; a < 2; ++a) {
        const auto& sp = kSpawns[rng.below(2)];
        pr[a] = sp.r;
        pc[a] = sp.c;
      }
      ns[kIdxInv0] = ns[kIdxInv1] = 0.0;
      for (int k = 0; k < 4; ++k) {
        ns[kIdxStagBits + k] = 1.0;
        ns[kIdxHareBits + k] = 1.0;
      }
    }

    ns[0] = pr[0];
    ns[1] = pc[0];
    ns[2] = pr[1];
    ns[3] = pc[1];
    ns[kIdxTime] = s[kIdxTime] + 1.0;
    out.done = int(ns[kIdxTime]) >= horizon_;
    out.next = std::move(ns);
    return out;
  }

  void features(const State& s, std::span<const int> joint, int, double* out) const override {
    double raw[kFeatureDim];
    raw_features(s, joint, raw);
    double norm2 = 0.0;
    for (int i = 0; i < kFeatureDim; ++i) {
      out[i] = raw[i] / norm_;
      norm2 += out[i] * out[i];
    }
    if (norm2 > 1.0) {
      const double fix = 1.0 / std::sqrt(norm2);
      for (int i = 0; i < kFeatureDim; ++i) out[i] *= fix;
    }
  }

 private:
  void raw_features(const State& s, std::span<const int> joint, double* raw) const {
    double obs[kObsDim];
    observation(s, obs);
    int k = 0;
    for (int i = 0; i < kObsDim; ++i) raw[k++] = obs[i];
    for (int a = 0; a < 2; ++a)
      for (int j = 0; j < kActions; ++j) raw[k++] = joint[a] == j ? 1.0 : 0.0;
    for (int a = 0; a < 2; ++a)
      for (int i = 0; i < kCrossObs; ++i)
        for (int j = 0; j < kActions; ++j)
          raw[k++] = joint[a] == j ? obs[i] : 0.0;
    for (int j0 = 0; j0 < kActions; ++j0)
      for (int j1 = 0; j1 < kActions; ++j1)
        raw[k++] = (joint[0] == j0 && joint[1] == j1) ? 1.0 : 0.0;
    // Interaction context: adjacency, carrying pattern, interact intent.
    const bool adjacent =
        manhattan(int(s[0]), int(s[1]), int(s[2]), int(s[3])) <= 1;
    const int inv0 = int(s[kIdxInv0]), inv1 = int(s[kIdxInv1]);
    const bool both = inv0 != kInvNone && inv1 != kInvNone;
    raw[k++] = adjacent ? 1.0 : 0.0;
    raw[k++] = both ? 1.0 : 0.0;
    raw[k++] = (inv0 == kInvStag && inv1 == kInvStag) ? 1.0 : 0.0;
    raw[k++] = (inv0 == kInvHare && inv1 == kInvHare) ? 1.0 : 0.0;
    raw[k++] = (joint[0] == kActInteract || joint[1] == kActInteract) ? 1.0 : 0.0;
  }

  void observation(const State& s, double* obs) const {
    auto nearest = [&](int r, int c, int bits_base, const std::array<Tile, 4>& tiles) {
      int best = 16;
      for (int k = 0; k < 4; ++k)
        if (s[bits_base + k] > 0.5)
          best = std::min(best, manhattan(r, c, tiles[k].r, tiles[k].c));
      return best;
    };
    obs[0] = s[0] / 8.0;
    obs[1] = s[1] / 8.0;
    obs[2] = s[2] / 8.0;
    obs[3] = s[3] / 8.0;
    obs[4] = nearest(int(s[0]), int(s[1]), kIdxStagBits, kStagTiles) / 16.0;
    obs[5] = nearest(int(s[0]), int(s[1]), kIdxHareBits, kHareTiles) / 16.0;
    obs[6] = nearest(int(s[2]), int(s[3]), kIdxStagBits, kStagTiles) / 16.0;
    obs[7] = nearest(int(s[2]), int(s[3]), kIdxHareBits, kHareTiles) / 16.0;
    obs[8] = s[kIdxInv0] == kInvStag ? 1.0 : 0.0;
    obs[9] = s[kIdxInv0] == kInvHare ? 1.0 : 0.0;
    obs[10] = s[kIdxInv1] == kInvStag ? 1.0 : 0.0;
    obs[11] = s[kIdxInv1] == kInvHare ? 1.0 : 0.0;
    obs[12] = manhattan(int(s[0]), int(s[1]), int(s[2]), int(s[3])) / 16.0;
    obs[13] = s[kIdxTime] / double(horizon_);
    obs[14] = 1.0;
  }

  // Probe random (state, action) pairs for the feature-bound certificate and
  // normalize by the observed max norm.
  void calibrate_norm(std::uint64_t seed) {
    norm_ = 1.0;
    Rng rng(seed);
    double max_norm = 0.0;
    std::array<int, 2> joint{};
    for (int probe = 0; probe < 20000; ++probe) {
      State s(kStateDim, 0.0);
      s[0] = double(rng.below(kGrid));
      s[1] = double(rng.below(kGrid));
      s[2] = double(rng.below(kGrid));
      s[3] = double(rng.below(kGrid));
      s[kIdxInv0] = double(rng.below(3));
      s[kIdxInv1] = double(rng.below(3));
      for (int k = 0; k < 8; ++k) s[kIdxStagBits + k] = double(rng.below(2));
      s[kIdxTime] = double(rng.below(horizon_));
      joint[0] = int(rng.below(kActions));
      joint[1] = int(rng.below(kActions));
      double raw[kFeatureDim];
      raw_features(s, joint, raw);
      double n2 = 0.0;
      for (double x : raw) n2 += x * x;
      max_norm = std::max(max_norm, std::sqrt(n2));
    }
    norm_ = max_norm * (1.0 + 1e-9);
  }

  int horizon_;
  EnvSpec spec_;
  double norm_ = 1.0;
};

}  // namespace

std::unique_ptr<Environment> make_dynamic_stag_hunt(const GridConfig& cfg) {
  return std::make_unique<StagHuntGridEnv>(cfg);
}

}  // namespace rqre
