#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "relugf/flow.hpp"
#include "relugf/init.hpp"

namespace relugf {

// Experiment configuration: one JSON document. Objects keep their keys
// sorted, so dump() is the canonical serialization used for hashing.
using Config = nlohmann::json;

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{
      "example1",       "optimize",         "implicit-bias",     "region-sweep",
      "dormant-census", "generalization",   "pl-diagnostics",    "separability-mc"};
  return kinds;
}

/// Defaults for `kind` with `user` merged on top (RFC 7386 merge patch).
/// Validates that grids are nonempty and seeds distinct.
Config make_config(const std::string& kind, const Config& user = Config::object());

/// Sets a dotted key (e.g. "flow.rel_tol") from a JSON literal; plain words
/// are taken as strings.
void set_override(Config& cfg, const std::string& assignment);

std::string canonical(const Config& cfg);
/// FNV-1a 64 of the canonical serialization, as 16 hex digits. "threads" and
/// "out" are left out.
std::string config_hash(const Config& cfg);

FlowConfig flow_config_from(const Config& j);
nlohmann::ordered_json to_json(const FlowConfig& f);

template <class T>
std::vector<T> grid(const Config& cfg, const std::string& key) {
  return cfg.at(key).get<std::vector<T>>();
}

/// Summary of one run: scalars plus the artifacts that reproduce them.
struct RunRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, double> scalars;
  std::map<std::string, std::string> labels;
  std::map<std::string, std::string> artifacts;
};

nlohmann::ordered_json to_json(const RunRecord& r);

/// Applies fn to every item on `threads` workers (0: hardware concurrency)
/// and returns results in input order. Rethrows the first exception.
template <class T, class Fn>
auto parallel_map(const std::vector<T>& items, Fn fn, unsigned threads = 0)
    -> std::vector<decltype(fn(items[0]))> {
  using R = decltype(fn(items[0]));
  std::vector<R> out(items.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, items.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= items.size()) return;
      try {
        out[i] = fn(items[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace relugf
