#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sugkit/error.hpp"

namespace sugkit {

using Day = std::int64_t;

struct ClickLogRecord {
  Day day = 0;
  std::string city;
  std::string prefix;
  std::string query;
  bool clicked = false;
  bool ordered = false;

  bool well_formed() const {
    return !prefix.empty() && !query.empty() && (clicked || !ordered);
  }
};

/// Inclusive day range.
struct DayWindow {
  Day first = 0;
  Day last = 0;

  bool contains(Day d) const { return d >= first && d <= last; }
  bool empty() const { return last < first; }
  Day length() const { return empty() ? 0 : last - first + 1; }
};

struct IngestReport {
  std::size_t accepted = 0;
  std::size_t unclicked = 0;
  std::size_t outside_window = 0;
  std::size_t rejected = 0;
};

/// Click counts keyed by (prefix, city, query), with a global per-(prefix,
/// query) rollup and the per-day contributions needed to evict a day later.
class CooccurrenceCounts {
 public:
  using CityKey = std::tuple<std::string, std::string, std::string>;  // prefix, city, query
  using GlobalKey = std::pair<std::string, std::string>;              // prefix, query
  using DayDeltas = std::map<CityKey, std::uint64_t>;

  const std::map<CityKey, std::uint64_t>& city_counts() const { return city_; }
  const std::map<GlobalKey, std::uint64_t>& global_counts() const { return global_; }
  const std::map<Day, DayDeltas>& day_deltas() const { return days_; }
  std::optional<Day> last_day() const { return last_day_; }
  Day window_days() const { return window_days_; }

  std::uint64_t count(const std::string& prefix, const std::string& city,
                      const std::string& query) const {
    auto it = city_.find(CityKey{prefix, city, query});
    return it == city_.end() ? 0 : it->second;
  }
  std::uint64_t global_count(const std::string& prefix, const std::string& query) const {
    auto it = global_.find(GlobalKey{prefix, query});
    return it == global_.end() ? 0 : it->second;
  }
  bool empty() const { return city_.empty(); }

  bool operator==(const CooccurrenceCounts&) const = default;

 private:
  friend CooccurrenceCounts ingest_logs(std::span<const ClickLogRecord>, DayWindow,
                                        IngestReport*);
  friend CooccurrenceCounts slide_window(CooccurrenceCounts, Day,
                                         std::span<const ClickLogRecord>, Day,
                                         IngestReport*);

  void add(const ClickLogRecord& r) {
    CityKey key{r.prefix, r.city, r.query};
    ++city_[key];
    ++global_[GlobalKey{r.prefix, r.query}];
    ++days_[r.day][key];
  }

  void evict(Day day) {
    auto it = days_.find(day);
    if (it == days_.end()) return;
    for (const auto& [key, n] : it->second) {
      decrement(city_, key, n);
      decrement(global_, GlobalKey{std::get<0>(key), std::get<2>(key)}, n);
    }
    days_.erase(it);
  }

  template <typename Map, typename Key>
  static void decrement(Map& m, const Key& key, std::uint64_t n) {
    auto it = m.find(key);
    if (it == m.end() || it->second < n) {
      throw InvariantError("eviction would drive a co-occurrence count below zero");
    }
    it->second -= n;
    if (it->second == 0) m.erase(it);
  }

  std::map<CityKey, std::uint64_t> city_;
  std::map<GlobalKey, std::uint64_t> global_;
  std::map<Day, DayDeltas> days_;
  std::optional<Day> last_day_;
  Day window_days_ = 7;
};

/// Counts clicked records inside `window`. Malformed records are rejected and
/// tallied in `report`; out-of-window and unclicked records are skipped.
inline CooccurrenceCounts ingest_logs(std::span<const ClickLogRecord> records,
                                      DayWindow window, IngestReport* report = nullptr) {
  if (window.empty()) throw InputError("ingest window is empty");
  IngestReport local;
  CooccurrenceCounts counts;
  counts.window_days_ = window.length();
  counts.last_day_ = window.last;
  for (const auto& r : records) {
    if (!r.well_formed()) {
      ++local.rejected;
    } else if (!window.contains(r.day)) {
      ++local.outside_window;
    } else if (!r.clicked) {
      ++local.unclicked;
    } else {
      counts.add(r);
      ++local.accepted;
    }
  }
  if (report != nullptr) *report = local;
  return counts;
}

/// Advances the window to `day`: evicts every day older than the trailing
/// `retention` days and adds `new_day_records`, which must all carry `day`.
inline CooccurrenceCounts slide_window(CooccurrenceCounts counts, Day day,
                                       std::span<const ClickLogRecord> new_day_records,
                                       Day retention, IngestReport* report = nullptr) {
  if (retention < 1) throw InputError("retention must be at least one day");
  if (counts.last_day_ && day <= *counts.last_day_) {
    throw OrderingError("slide day " + std::to_string(day) +
                        " is not after last ingested day " + std::to_string(*counts.last_day_));
  }
  if (!counts.days_.empty() && day <= counts.days_.rbegin()->first) {
    throw OrderingError("slide day " + std::to_string(day) + " is not after ingested data");
  }
  for (const auto& r : new_day_records) {
    if (r.day != day) {
      throw OrderingError("record day " + std::to_string(r.day) + " differs from slide day " +
                          std::to_string(day));
    }
  }
  const Day oldest_kept = day - retention + 1;
  while (!counts.days_.empty() && counts.days_.begin()->first < oldest_kept) {
    counts.evict(counts.days_.begin()->first);
  }
  IngestReport local;
  for (const auto& r : new_day_records) {
    if (!r.well_formed()) {
      ++local.rejected;
    } else if (!r.clicked) {
      ++local.unclicked;
    } else {
      counts.add(r);
      ++local.accepted;
    }
  }
  counts.last_day_ = day;
  counts.window_days_ = retention;
  if (report != nullptr) *report = local;
  return counts;
}

struct RankedQuery {
  std::string query;
  std::uint64_t count = 0;

  bool operator==(const RankedQuery&) const = default;
};

/// Immutable once built; safe for concurrent lookup.
struct CandidateIndex {
  static constexpr int kFormatVersion = 1;

  std::map<std::string, std::map<std::string, std::vector<RankedQuery>>> city_lists;
  std::map<std::string, std::vector<RankedQuery>> global_lists;
  Day window_days = 7;
  Day built_at_day = 0;

  bool operator==(const CandidateIndex&) const = default;

  nlohmann::json to_json() const {
    auto list_json = [](const std::vector<RankedQuery>& list) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& e : list) arr.push_back({e.query, e.count});
      return arr;
    };
    nlohmann::json cities = nlohmann::json::object();
    for (const auto& [prefix, by_city] : city_lists) {
      nlohmann::json per = nlohmann::json::object();
      for (const auto& [city, list] : by_city) per[city] = list_json(list);
      cities[prefix] = std::move(per);
    }
    nlohmann::json global = nlohmann::json::object();
    for (const auto& [prefix, list] : global_lists) global[prefix] = list_json(list);
    return {{"format", "sugkit.candidate_index"},
            {"version", kFormatVersion},
            {"window_days", window_days},
            {"built_at_day", built_at_day},
            {"city_lists", std::move(cities)},
            {"global_lists", std::move(global)}};
  }

  static CandidateIndex from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "sugkit.candidate_index") {
      throw InputError("not a candidate index document");
    }
    if (j.at("version").get<int>() != kFormatVersion) {
      throw InputError("unsupported candidate index version");
    }
    auto parse_list = [](const nlohmann::json& arr) {
      std::vector<RankedQuery> out;
      for (const auto& e : arr) {
        out.push_back({e.at(0).get<std::string>(), e.at(1).get<std::uint64_t>()});
      }
      return out;
    };
    CandidateIndex index;
    index.window_days = j.at("window_days").get<Day>();
    index.built_at_day = j.at("built_at_day").get<Day>();
    for (const auto& [prefix, by_city] : j.at("city_lists").items()) {
      for (const auto& [city, list] : by_city.items()) {
        index.city_lists[prefix][city] = parse_list(list);
      }
    }
    for (const auto& [prefix, list] : j.at("global_lists").items()) {
      index.global_lists[prefix] = parse_list(list);
    }
    return index;
  }
};

namespace detail {
inline void sort_ranked(std::vector<RankedQuery>& list) {
  std::sort(list.begin(), list.end(), [](const RankedQuery& a, const RankedQuery& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.query < b.query;
  });
}
}  // namespace detail

inline CandidateIndex build_index(const CooccurrenceCounts& counts) {
  CandidateIndex index;
  index.window_days = counts.window_days();
  index.built_at_day = counts.last_day().value_or(0);
  for (const auto& [key, n] : counts.city_counts()) {
    const auto& [prefix, city, query] = key;
    index.city_lists[prefix][city].push_back({query, n});
  }
  for (const auto& [key, n] : counts.global_counts()) {
    index.global_lists[key.first].push_back({key.second, n});
  }
  for (auto& [prefix, by_city] : index.city_lists) {
    for (auto& [city, list] : by_city) detail::sort_ranked(list);
  }
  for (auto& [prefix, list] : index.global_lists) detail::sort_ranked(list);
  return index;
}

/// City list first, then global backfill, skipping queries already emitted.
inline std::vector<std::string> lookup(const CandidateIndex& index, const std::string& prefix,
                                       const std::string& city, std::size_t m) {
  std::vector<std::string> out;
  if (m == 0) return out;
  std::unordered_set<std::string> seen;
  auto take = [&](const std::vector<RankedQuery>& list) {
    for (const auto& e : list) {
      if (out.size() >= m) return;
      if (seen.insert(e.query).second) out.push_back(e.query);
    }
  };
  if (auto p = index.city_lists.find(prefix); p != index.city_lists.end()) {
    if (auto c = p->second.find(city); c != p->second.end()) take(c->second);
  }
  if (auto g = index.global_lists.find(prefix); g != index.global_lists.end()) take(g->second);
  return out;
}

/// Reads JSON-lines click logs. Lines that fail to parse or miss a field are
/// counted in `rejected` and skipped.
inline std::vector<ClickLogRecord> read_click_log(std::istream& in,
                                                  std::size_t* rejected = nullptr) {
  std::vector<ClickLogRecord> out;
  std::string line;
  std::size_t bad = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ClickLogRecord r;
      r.day = j.at("day").get<Day>();
      r.city = j.at("city").get<std::string>();
      r.prefix = j.at("prefix").get<std::string>();
      r.query = j.at("query").get<std::string>();
      r.clicked = j.at("clicked").get<bool>();
      r.ordered = j.at("ordered").get<bool>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception&) {
      ++bad;
    }
  }
  if (rejected != nullptr) *rejected = bad;
  return out;
}

inline nlohmann::json to_json(const ClickLogRecord& r) {
  return {{"day", r.day},         {"city", r.city},       {"prefix", r.prefix},
          {"query", r.query},     {"clicked", r.clicked}, {"ordered", r.ordered}};
}

}  // namespace sugkit
