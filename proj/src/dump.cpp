#include "cotig/dump.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>

#include "cotig/error.hpp"

namespace cotig {

using nlohmann::json;

namespace {

const char* const kHeaderKeys[] = {"kind",      "format_version",    "model_id", "baseline", "steps",
                                   "keyword_profile", "score_target", "attributed_region", "tokenizer"};

template <typename T>
T required(const json& j, const char* key, std::size_t line_no) {
  if (!j.contains(key)) throw Error(ErrorKind::format, fmt::format("dump line {}: missing '{}'", line_no, key));
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, fmt::format("dump line {}: bad '{}': {}", line_no, key, e.what()));
  }
}

}  // namespace

DumpHeader make_header(const std::string& model_id, const AttributionConfig& cfg, const std::string& keyword_profile) {
  DumpHeader h;
  h.model_id = model_id;
  h.baseline = cfg.baseline_id();
  h.steps = cfg.steps;
  h.keyword_profile = keyword_profile;
  h.attributed_region = std::string(to_string(cfg.region));
  h.extra["forcing_text"] = cfg.prompt.forcing_text;
  return h;
}

DumpRecord to_record(const TokenAttribution& a) {
  DumpRecord r;
  r.trace_id = a.trace_id;
  r.token_igs = a.igs;
  r.query_tokens = a.query_tokens;
  r.completeness_gap = a.completeness_gap;
  return r;
}

void write_dump(std::ostream& out, const Dump& dump) {
  const auto& h = dump.header;
  json header = h.extra;
  header["kind"] = "header";
  header["format_version"] = h.format_version;
  header["model_id"] = h.model_id;
  header["baseline"] = h.baseline;
  header["steps"] = h.steps;
  header["keyword_profile"] = h.keyword_profile;
  header["score_target"] = h.score_target;
  header["attributed_region"] = h.attributed_region;
  header["tokenizer"] = h.tokenizer;
  out << header.dump() << '\n';
  for (const auto& r : dump.records) {
    json rec = {{"trace_id", r.trace_id}, {"token_igs", r.token_igs}};
    if (r.query_tokens != 0) rec["query_tokens"] = r.query_tokens;
    if (r.completeness_gap) rec["completeness_gap"] = *r.completeness_gap;
    if (!r.tokens.empty()) {
      json toks = json::array();
      for (const auto& t : r.tokens) toks.push_back({{"text", t.text}, {"start", t.span.begin}, {"end", t.span.end}});
      rec["tokens"] = std::move(toks);
    }
    out << rec.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

void write_dump(const std::filesystem::path& path, const Dump& dump) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write dump '{}'", path.string()));
  write_dump(out, dump);
}

Dump read_dump(std::istream& in) {
  Dump dump;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::parse, fmt::format("dump line {}: {}", line_no, e.what()));
    }
    if (!have_header) {
      if (!j.is_object() || j.value("kind", "") != "header") {
        throw Error(ErrorKind::format, "dump must start with a header line");
      }
      auto& h = dump.header;
      h.format_version = required<int>(j, "format_version", line_no);
      if (h.format_version != kDumpFormatVersion) {
        throw Error(ErrorKind::incompatible, fmt::format("dump format_version {} (supported: {})", h.format_version,
                                                         kDumpFormatVersion));
      }
      h.model_id = required<std::string>(j, "model_id", line_no);
      h.baseline = required<std::string>(j, "baseline", line_no);
      h.steps = required<std::size_t>(j, "steps", line_no);
      h.keyword_profile = required<std::string>(j, "keyword_profile", line_no);
      h.score_target = j.value("score_target", h.score_target);
      h.attributed_region = j.value("attributed_region", h.attributed_region);
      h.tokenizer = j.value("tokenizer", h.tokenizer);
      for (const char* key : kHeaderKeys) j.erase(key);
      h.extra = std::move(j);
      have_header = true;
      continue;
    }
    DumpRecord r;
    r.trace_id = required<std::string>(j, "trace_id", line_no);
    r.token_igs = required<std::vector<double>>(j, "token_igs", line_no);
    r.query_tokens = j.value("query_tokens", std::size_t{0});
    if (j.contains("completeness_gap")) r.completeness_gap = required<double>(j, "completeness_gap", line_no);
    if (j.contains("tokens")) {
      for (const auto& t : j["tokens"]) {
        r.tokens.push_back(Token{r.tokens.size(), t.value("text", std::string{}),
                                 {t.at("start").get<std::size_t>(), t.at("end").get<std::size_t>()}});
      }
    }
    dump.records.push_back(std::move(r));
  }
  if (!have_header) throw Error(ErrorKind::format, "dump is empty (no header line)");
  return dump;
}

Dump read_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot open dump '{}'", path.string()));
  return read_dump(in);
}

std::vector<TokenAttribution> join_dump(const std::vector<ReasoningTrace>& traces, const Dump& dump) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < traces.size(); ++i) by_id.emplace(traces[i].trace_id, i);
  std::vector<const DumpRecord*> matched(traces.size(), nullptr);
  for (const auto& r : dump.records) {
    const auto it = by_id.find(r.trace_id);
    if (it == by_id.end()) throw Error(ErrorKind::join, fmt::format("dump record for unknown trace '{}'", r.trace_id));
    matched[it->second] = &r;
  }
  AttributionConfig cfg;
  cfg.steps = dump.header.steps;
  cfg.region = parse_region(dump.header.attributed_region);
  cfg.baseline = parse_baseline(dump.header.baseline, cfg.baseline_token);
  if (dump.header.extra.contains("forcing_text")) cfg.prompt.forcing_text = dump.header.extra["forcing_text"];

  std::vector<TokenAttribution> out;
  out.reserve(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const DumpRecord* r = matched[i];
    if (r == nullptr) throw Error(ErrorKind::join, fmt::format("trace '{}' has no dump record", traces[i].trace_id));
    if (r->token_igs.size() != r->query_tokens + traces[i].token_count()) {
      throw Error(ErrorKind::join, fmt::format("trace '{}': dump carries {} IGs for {} attributed tokens",
                                               r->trace_id, r->token_igs.size(),
                                               r->query_tokens + traces[i].token_count()));
    }
    TokenAttribution a;
    a.trace_id = r->trace_id;
    a.igs = r->token_igs;
    a.query_tokens = r->query_tokens;
    a.completeness_gap = r->completeness_gap.value_or(0.0);
    a.config = cfg;
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace cotig
