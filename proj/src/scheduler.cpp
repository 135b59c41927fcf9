#include "pinet/scheduler.hpp"

#include <algorithm>
#include <optional>

namespace pinet {

void ScheduleConfig::validate() const {
  if (M < 1 || M >= N) throw ConfigError("schedule: require 1 <= M < N");
}

std::string_view to_string(RouteMode mode) {
  switch (mode) {
    case RouteMode::interp: return "INTERP";
    case RouteMode::prop_left: return "PROP_LEFT";
    case RouteMode::prop_right: return "PROP_RIGHT";
    case RouteMode::prop_both_interp: return "PROP_BOTH_INTERP";
  }
  return "?";
}

int delta_t(int n, const ScheduleConfig& cfg) {
  if (n <= cfg.M) {
    throw RoutingError("delta_t: gap n=" + std::to_string(n) + " does not exceed M=" + std::to_string(cfg.M));
  }
  const int half = (n - cfg.M + 1) / 2;  // ceil((n - M) / 2) for positive n - M
  return std::min(half, cfg.M);
}

RouteMode route(int n, int i, const ScheduleConfig& cfg) {
  if (i <= 0 || i >= n) {
    throw std::out_of_range("route: target " + std::to_string(i) + " outside (0," + std::to_string(n) + ")");
  }
  if (n <= cfg.M) return RouteMode::interp;
  const int d = delta_t(n, cfg);
  if (i <= d) return RouteMode::prop_left;
  if (i < n - d) return RouteMode::prop_both_interp;
  return RouteMode::prop_right;
}

size_t RoutePlan::count(RouteMode mode) const {
  return static_cast<size_t>(std::count(modes.begin(), modes.end(), mode));
}

RoutePlan plan_routes(int n, const ScheduleConfig& cfg) {
  if (n < 2) throw std::out_of_range("plan_routes: gap must be >= 2");
  RoutePlan plan;
  plan.n = n;
  plan.delta = n > cfg.M ? delta_t(n, cfg) : 0;
  for (int i = 1; i < n; ++i) plan.modes.push_back(route(n, i, cfg));
  return plan;
}

double bridge_tau(int n, int i, int delta) {
  return static_cast<double>(i - delta) / static_cast<double>(n - 2 * delta);
}

std::vector<Frame> run_pinet(PNet& pnet, INet& inet, const Frame& left, const Frame& right, int n,
                             const std::vector<int>& targets, const ScheduleConfig& cfg, ExecutionStats* stats) {
  cfg.validate();
  if (left.tensor().sizes() != right.tensor().sizes()) throw ShapeError("run_pinet: input frames differ in size");
  for (int i : targets) {
    if (i <= 0 || i >= n) throw std::out_of_range("run_pinet: target " + std::to_string(i) + " outside (0,n)");
  }
  ExecutionStats local;
  ExecutionStats& st = stats ? *stats : local;
  torch::NoGradGuard no_grad;

  std::vector<std::optional<Frame>> out(targets.size());
  if (n <= cfg.M) {
    std::vector<TimeQuery> queries;
    for (int i : targets) queries.push_back({0, static_cast<double>(i) / n});
    if (!queries.empty()) {
      auto res = inet->forward(left.batched(), right.batched(), queries);
      ++st.inet_calls;
      st.inet_frames += static_cast<int>(queries.size());
      for (size_t k = 0; k < targets.size(); ++k) out[k] = Frame::clamped(res.frames[static_cast<int64_t>(k)]);
    }
  } else {
    const int d = delta_t(n, cfg);
    if (pnet->config().propagation.m < d) {
      throw ConfigError("run_pinet: PNet forecasts " + std::to_string(pnet->config().propagation.m) +
                        " steps but the plan needs " + std::to_string(d));
    }
    const bool need_left = std::any_of(targets.begin(), targets.end(), [&](int i) { return route(n, i, cfg) != RouteMode::prop_right; });
    const bool need_right = std::any_of(targets.begin(), targets.end(), [&](int i) { return route(n, i, cfg) != RouteMode::prop_left; });
    std::optional<PropagationResult> fwd, bwd;
    if (need_left) {
      fwd = pnet->forward(left.batched(), right.batched(), n, Direction::forward);
      ++st.forward_propagations;
    }
    if (need_right) {
      bwd = pnet->forward(right.batched(), left.batched(), n, Direction::backward);
      ++st.backward_propagations;
    }
    std::vector<TimeQuery> queries;
    std::vector<size_t> query_slots;
    for (size_t k = 0; k < targets.size(); ++k) {
      const int i = targets[k];
      switch (route(n, i, cfg)) {
        case RouteMode::prop_left: out[k] = fwd->frame(i).frame(); break;
        case RouteMode::prop_right: out[k] = bwd->frame(n - i).frame(); break;
        case RouteMode::prop_both_interp:
          queries.push_back({0, bridge_tau(n, i, d)});
          query_slots.push_back(k);
          break;
        case RouteMode::interp: break;
      }
    }
    if (!queries.empty()) {
      auto l = fwd->frame(d).finest().clamp(0.0, 1.0);
      auto r = bwd->frame(d).finest().clamp(0.0, 1.0);
      auto res = inet->forward(l, r, queries);
      ++st.inet_calls;
      st.inet_frames += static_cast<int>(queries.size());
      for (size_t q = 0; q < queries.size(); ++q) {
        out[query_slots[q]] = Frame::clamped(res.frames[static_cast<int64_t>(q)]);
      }
    }
  }
  std::vector<Frame> frames;
  frames.reserve(out.size());
  for (auto& f : out) frames.push_back(std::move(*f));
  return frames;
}

}  // namespace pinet
