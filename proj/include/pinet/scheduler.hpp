#pragma once

#include "pinet/inet.hpp"
#include "pinet/pnet.hpp"

#include <string_view>
#include <vector>

namespace pinet {

struct ScheduleConfig {
  int M = 8;   ///< largest gap handled by interpolation alone
  int N = 24;  ///< largest gap seen in training

  void validate() const;
  bool operator==(const ScheduleConfig&) const = default;
};

enum class RouteMode { interp, prop_left, prop_right, prop_both_interp };

std::string_view to_string(RouteMode mode);

/// Frames propagated from each side before interpolation bridges the rest:
/// min(ceil((n - M) / 2), M). Requires n > M.
int delta_t(int n, const ScheduleConfig& cfg);

/// Route target i of a gap-n pair. Requires 0 < i < n.
RouteMode route(int n, int i, const ScheduleConfig& cfg);

struct RoutePlan {
  int n = 0;
  int delta = 0;  ///< 0 when n <= M
  std::vector<RouteMode> modes;  ///< modes[i-1] for target i

  RouteMode at(int i) const { return modes.at(static_cast<size_t>(i - 1)); }
  size_t count(RouteMode mode) const;
};

RoutePlan plan_routes(int n, const ScheduleConfig& cfg);

/// INet time for a middle target bridged between the two propagated end frames.
double bridge_tau(int n, int i, int delta);

/// Counters exposed for tests of the execution contract.
struct ExecutionStats {
  int forward_propagations = 0;
  int backward_propagations = 0;
  int inet_calls = 0;   ///< batched INet invocations
  int inet_frames = 0;  ///< frames synthesized by INet
};

/// Executes the routed plan for one input pair: at most one propagation per
/// direction, shared across all targets, and one batched INet call.
std::vector<Frame> run_pinet(PNet& pnet, INet& inet, const Frame& left, const Frame& right, int n,
                             const std::vector<int>& targets, const ScheduleConfig& cfg,
                             ExecutionStats* stats = nullptr);

}  // namespace pinet
