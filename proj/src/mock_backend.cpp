#include <fmt/format.h>

#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <vector>

#include "cbforge/errors.hpp"
#include "cbforge/llm_gateway.hpp"
#include "json.hpp"

namespace cbforge {
namespace {

struct ScriptEntry {
  std::optional<std::string> contains;
  std::optional<std::regex> regex;
  std::vector<std::string> responses;
  std::optional<FinishReason> finish_reason;
  int status = 200;
  std::optional<std::size_t> times;
  std::size_t fired = 0;
};

struct ScriptState {
  std::mutex mu;
  std::vector<ScriptEntry> entries;
};

ScriptEntry parse_entry(const nlohmann::json& j, std::size_t line) {
  ScriptEntry e;
  if (auto c = j.find("contains"); c != j.end()) e.contains = c->get<std::string>();
  if (auto r = j.find("regex"); r != j.end()) {
    std::string pattern = r->get<std::string>();
    auto flags = std::regex::ECMAScript;
    if (pattern.starts_with("(?i)")) {
      pattern.erase(0, 4);
      flags |= std::regex::icase;
    }
    try {
      e.regex.emplace(pattern, flags);
    } catch (const std::regex_error& err) {
      throw ConfigError(fmt::format("mock script line {}: bad regex: {}", line, err.what()));
    }
  }
  if (!e.contains && !e.regex) {
    throw ConfigError(fmt::format("mock script line {}: needs 'contains' or 'regex'", line));
  }
  if (auto r = j.find("response"); r != j.end()) e.responses.push_back(r->get<std::string>());
  if (auto r = j.find("responses"); r != j.end()) {
    for (const auto& item : *r) e.responses.push_back(item.get<std::string>());
  }
  if (auto f = j.find("finish_reason"); f != j.end()) {
    e.finish_reason = parse_finish_reason(f->get<std::string>());
    if (!e.finish_reason) {
      throw ConfigError(fmt::format("mock script line {}: unknown finish_reason", line));
    }
  }
  e.status = j.value("status", 200);
  if (auto t = j.find("times"); t != j.end()) e.times = t->get<std::size_t>();
  if (e.status == 200 && e.responses.empty()) {
    throw ConfigError(fmt::format("mock script line {}: a 200 entry needs a response", line));
  }
  return e;
}

}  // namespace

MockBackend::MockBackend(Responder responder) : responder_(std::move(responder)) {}

BackendReply MockBackend::send(const ChatRequest& req) {
  calls_.fetch_add(1);
  return responder_(req);
}

std::shared_ptr<MockBackend> MockBackend::from_script_text(std::string_view jsonl) {
  auto state = std::make_shared<ScriptState>();
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      state->entries.push_back(parse_entry(nlohmann::json::parse(line), line_no));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("mock script line {}: {}", line_no, e.what()));
    }
  }
  return std::make_shared<MockBackend>([state](const ChatRequest& req) {
    std::lock_guard lock(state->mu);
    for (auto& e : state->entries) {
      if (e.times && e.fired >= *e.times) continue;
      const bool hit = e.contains ? req.prompt.find(*e.contains) != std::string::npos
                                  : std::regex_search(req.prompt, *e.regex);
      if (!hit) continue;
      const std::size_t turn = e.fired++;
      BackendReply reply;
      reply.status = e.status;
      if (e.status != 200) {
        reply.error = "scripted failure";
        return reply;
      }
      const std::size_t pick =
          req.seed_hint ? static_cast<std::size_t>(*req.seed_hint) % e.responses.size()
                        : turn % e.responses.size();
      reply.text = e.responses[pick];
      reply.finish_reason = e.finish_reason;
      return reply;
    }
    BackendReply miss;
    miss.status = 404;
    miss.error = "no mock script entry matches the prompt";
    return miss;
  });
}

std::shared_ptr<MockBackend> MockBackend::from_script_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read mock script {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_script_text(buf.str());
}

}  // namespace cbforge
