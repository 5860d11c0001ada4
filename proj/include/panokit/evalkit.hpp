#pragma once

// QA record handling: keyword filtration of generated pairs and normalized
// judge-score aggregation with a per-category breakdown.

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "panokit/matrix.hpp"
#include "panokit/scene.hpp"  // SchemaError

namespace panokit {

inline const std::array<std::string, 12>& qa_categories() {
  static const std::array<std::string, 12> cats = {"N1", "N2", "N3", "N4", "O1", "O2",
                                                   "O3", "D1", "D2", "D3", "D4", "D5"};
  return cats;
}

inline bool is_qa_category(const std::string& c) {
  const auto& cats = qa_categories();
  return std::find(cats.begin(), cats.end(), c) != cats.end();
}

struct QARecord {
  std::string id;
  std::string category;  // N1..N4, O1..O3, D1..D5
  std::string question;
  std::string answer;
  std::optional<std::string> prediction;
  std::optional<int> score;  // judge score in [1, 5]

  void validate() const {
    if (!is_qa_category(category))
      throw SchemaError("record " + id + ": unknown category '" + category + "'");
    if (score && (*score < 1 || *score > 5))
      throw SchemaError("record " + id + ": score " + std::to_string(*score) +
                        " outside [1,5]");
  }
};

// S = 1/N * sum (s_i - 1)/4 * 100.
inline double normalize_scores(const std::vector<QARecord>& records) {
  if (records.empty()) throw SchemaError("normalize_scores: empty record list");
  double sum = 0.0;
  for (const auto& r : records) {
    r.validate();
    if (!r.score) throw SchemaError("record " + r.id + ": missing score");
    sum += static_cast<double>(*r.score - 1) / 4.0 * 100.0;
  }
  return sum / static_cast<double>(records.size());
}

struct ScoreReport {
  // category -> (score, count); categories with no records are absent
  std::map<std::string, std::pair<double, std::size_t>> per_category;
  std::optional<double> avg_n, avg_o, avg_d;
  std::optional<double> avg;         // unweighted mean over present category scores
  std::optional<double> record_avg;  // mean over all records, for transparency
  std::size_t total_records = 0;
};

inline ScoreReport category_report(const std::vector<QARecord>& records) {
  std::map<std::string, std::vector<QARecord>> buckets;
  for (const auto& r : records) {
    r.validate();
    buckets[r.category].push_back(r);
  }
  ScoreReport rep;
  rep.total_records = records.size();
  for (const auto& cat : qa_categories()) {
    auto it = buckets.find(cat);
    if (it == buckets.end()) continue;
    rep.per_category[cat] = {normalize_scores(it->second), it->second.size()};
  }
  auto subset_avg = [&](char prefix) -> std::optional<double> {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& [cat, sc] : rep.per_category) {
      if (cat[0] != prefix) continue;
      sum += sc.first;
      ++n;
    }
    if (!n) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  rep.avg_n = subset_avg('N');
  rep.avg_o = subset_avg('O');
  rep.avg_d = subset_avg('D');
  if (!rep.per_category.empty()) {
    double sum = 0;
    for (const auto& [cat, sc] : rep.per_category) sum += sc.first;
    rep.avg = sum / static_cast<double>(rep.per_category.size());
  }
  if (!records.empty()) rep.record_avg = normalize_scores(records);
  return rep;
}

struct FilterSpec {
  std::vector<std::string> keywords;  // case-insensitive substrings

  // one keyword per line, '#' starts a comment
  static FilterSpec parse(std::istream& is) {
    FilterSpec spec;
    std::string line;
    while (std::getline(is, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      // trim
      auto b = line.find_first_not_of(" \t\r");
      auto e = line.find_last_not_of(" \t\r");
      if (b == std::string::npos) continue;
      spec.keywords.push_back(line.substr(b, e - b + 1));
    }
    return spec;
  }
};

namespace detail {

inline std::string to_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace detail

struct RemovedRecord {
  QARecord record;
  std::string keyword;  // matched keyword
  std::string field;    // "question" or "answer"
};

struct FilterResult {
  std::vector<QARecord> kept;
  std::vector<RemovedRecord> removed;
};

inline FilterResult filter_records(const std::vector<QARecord>& records,
                                   const FilterSpec& spec) {
  FilterResult out;
  for (const auto& r : records) {
    const std::string q = detail::to_lower(r.question);
    const std::string a = detail::to_lower(r.answer);
    bool hit = false;
    for (const auto& kw : spec.keywords) {
      const std::string lk = detail::to_lower(kw);
      if (q.find(lk) != std::string::npos) {
        out.removed.push_back({r, kw, "question"});
        hit = true;
        break;
      }
      if (a.find(lk) != std::string::npos) {
        out.removed.push_back({r, kw, "answer"});
        hit = true;
        break;
      }
    }
    if (!hit) out.kept.push_back(r);
  }
  return out;
}

// ---- JSONL ----

inline QARecord qa_record_from_json(const nlohmann::json& j) {
  QARecord r;
  if (!j.contains("id")) throw SchemaError("/id: missing");
  if (!j.contains("category")) throw SchemaError("/category: missing");
  if (!j.contains("question")) throw SchemaError("/question: missing");
  if (!j.contains("answer")) throw SchemaError("/answer: missing");
  r.id = j["id"].get<std::string>();
  r.category = j["category"].get<std::string>();
  r.question = j["question"].get<std::string>();
  r.answer = j["answer"].get<std::string>();
  if (j.contains("prediction")) r.prediction = j["prediction"].get<std::string>();
  if (j.contains("score")) r.score = j["score"].get<int>();
  r.validate();
  return r;
}

inline nlohmann::json qa_record_to_json(const QARecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["category"] = r.category;
  j["question"] = r.question;
  j["answer"] = r.answer;
  if (r.prediction) j["prediction"] = *r.prediction;
  if (r.score) j["score"] = *r.score;
  return j;
}

// Throws SchemaError with a 1-based line number on malformed input.
inline std::vector<QARecord> read_qa_jsonl(std::istream& is) {
  std::vector<QARecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw SchemaError("line " + std::to_string(lineno) + ": invalid JSON");
    try {
      records.push_back(qa_record_from_json(j));
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

inline void write_qa_jsonl(std::ostream& os, const std::vector<QARecord>& records) {
  for (const auto& r : records) os << qa_record_to_json(r).dump() << "\n";
}

inline nlohmann::json report_to_json(const ScoreReport& rep) {
  nlohmann::json j;
  j["categories"] = nlohmann::json::object();
  for (const auto& cat : qa_categories()) {
    auto it = rep.per_category.find(cat);
    if (it == rep.per_category.end()) {
      j["categories"][cat] = nullptr;
    } else {
      j["categories"][cat] = {{"score", it->second.first}, {"count", it->second.second}};
    }
  }
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v)
      j[key] = *v;
    else
      j[key] = nullptr;
  };
  put("avg_n", rep.avg_n);
  put("avg_o", rep.avg_o);
  put("avg_d", rep.avg_d);
  put("avg", rep.avg);
  put("record_avg", rep.record_avg);
  j["total_records"] = rep.total_records;
  return j;
}

// Plain-text table, N1..N4 O1..O3 D1..D5 Avg columns.
inline std::string report_to_table(const ScoreReport& rep) {
  std::ostringstream os;
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (v)
      std::snprintf(buf, sizeof(buf), "%7.2f", *v);
    else
      std::snprintf(buf, sizeof(buf), "%7s", "-");
    return std::string(buf);
  };
  for (const auto& cat : qa_categories()) os << "     " << cat;
  os << "     Avg\n";
  for (const auto& cat : qa_categories()) {
    auto it = rep.per_category.find(cat);
    os << cell(it == rep.per_category.end() ? std::nullopt
                                            : std::optional<double>(it->second.first));
  }
  os << cell(rep.avg) << "\n";
  return os.str();
}

}  // namespace panokit
