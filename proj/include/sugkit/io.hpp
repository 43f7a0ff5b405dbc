#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sugkit/candidate_miner.hpp"
#include "sugkit/context.hpp"
#include "sugkit/error.hpp"
#include "sugkit/evaluator.hpp"
#include "sugkit/grpo.hpp"
#include "sugkit/scorer.hpp"

// File formats used by the command-line tool. Datasets are JSON lines with
// the context fields (prefix, city, candidates, hot_words, history, profile)
// plus `truth` and either `converted` (training) or `clicked`/`ordered` (eval).

namespace sugkit::io {

inline std::ifstream open_in(const std::string& path) {
  if (path.empty()) throw InputError("missing input path");
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  if (path.empty()) throw InputError("missing output path");
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  return out;
}

inline nlohmann::json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

/// Calls `fn(json, line_number)` for every non-blank line; parse and field
/// errors are rethrown as InputError naming the line.
template <class Fn>
void for_each_jsonl(std::istream& in, const std::string& name, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(line), lineno);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline std::vector<TrainingInstance> read_training(const std::string& path) {
  auto in = open_in(path);
  std::vector<TrainingInstance> out;
  for_each_jsonl(in, path, [&](const nlohmann::json& j, std::size_t) {
    out.push_back({context_from_json(j), j.at("truth").get<std::string>(),
                   j.value("converted", false)});
  });
  return out;
}

inline std::vector<EvalInstance> read_eval(const std::string& path) {
  auto in = open_in(path);
  std::vector<EvalInstance> out;
  for_each_jsonl(in, path, [&](const nlohmann::json& j, std::size_t) {
    out.push_back({context_from_json(j), j.at("truth").get<std::string>(),
                   j.value("clicked", false), j.value("ordered", false)});
  });
  return out;
}

inline nlohmann::json to_json(const TrainingInstance& t) {
  auto j = to_json(t.context);
  j["truth"] = t.truth;
  j["converted"] = t.converted;
  return j;
}

inline nlohmann::json to_json(const EvalInstance& e) {
  auto j = to_json(e.context);
  j["truth"] = e.truth;
  j["clicked"] = e.clicked;
  j["ordered"] = e.ordered;
  return j;
}

/// Per-user and per-city side information for `suggest`. A fixture line
/// carries either {"user", "history", "profile"} or {"city", "hot_words"}.
struct Fixtures {
  struct User {
    std::vector<std::string> history;
    std::vector<std::string> profile;
  };
  std::map<std::string, User> users;
  std::map<std::string, std::vector<std::string>> hot_words;
};

inline Fixtures read_fixtures(const std::string& path) {
  auto in = open_in(path);
  Fixtures f;
  auto list = [](const nlohmann::json& j, const char* key) {
    return j.contains(key) ? j.at(key).get<std::vector<std::string>>()
                           : std::vector<std::string>{};
  };
  for_each_jsonl(in, path, [&](const nlohmann::json& j, std::size_t lineno) {
    if (j.contains("user")) {
      f.users[j.at("user").get<std::string>()] = {list(j, "history"), list(j, "profile")};
    } else if (j.contains("city")) {
      f.hot_words[j.at("city").get<std::string>()] = list(j, "hot_words");
    } else {
      throw InputError(path + ":" + std::to_string(lineno) + ": fixture needs user or city");
    }
  });
  return f;
}

inline ScorerModel read_checkpoint(const std::string& path) {
  try {
    return ScorerModel::from_json(read_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline CandidateIndex read_index(const std::string& path) {
  try {
    return CandidateIndex::from_json(read_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

}  // namespace sugkit::io
