#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "resbridge/runconfig.hpp"
#include "resbridge/svg.hpp"

using namespace resbridge;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Minimal XML well-formedness check: tags balance, attributes quoted.
bool xml_well_formed(const std::string& s) {
  std::vector<std::string> stack;
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '<') {
      ++i;
      continue;
    }
    const size_t end = s.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = s.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag.front() == '?' || tag.front() == '!') continue;  // prolog/comment
    const bool closing = tag.front() == '/';
    const bool self_closing = tag.back() == '/';
    if (closing) {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      continue;
    }
    std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
    if (name.empty()) return false;
    // attribute quotes must balance
    size_t quotes = 0;
    for (char c : tag) quotes += c == '"';
    if (quotes % 2 != 0) return false;
    if (!self_closing) stack.push_back(name);
  }
  return stack.empty();
}

}  // namespace

TEST_CASE("config canonical form is idempotent and hash-stable") {
  RunConfig cfg;
  cfg.seed = 42;
  cfg.bridge.cutoff = 5;
  const std::string canon = cfg.canonical_json();
  const RunConfig back = RunConfig::from_json_text(canon);
  CHECK(back.canonical_json() == canon);
  CHECK(back.hash() == cfg.hash());
  CHECK(back.seed == 42);
  CHECK(back.bridge.cutoff == 5);

  // partial JSON fills defaults
  const RunConfig sparse = RunConfig::from_json_text("{\"seed\": 9}");
  CHECK(sparse.seed == 9);
  CHECK(sparse.task.horizon == 16);
  CHECK(sparse.optim.total_steps == 5000);
  CHECK(sparse.bridge.sigma_min == 0.1);
  CHECK(sparse.train.batch_size == 64);

  // different configs hash differently
  RunConfig other = cfg;
  other.bridge.cutoff = 6;
  CHECK(other.hash() != cfg.hash());
}

TEST_CASE("config file round-trip") {
  RunConfig cfg;
  cfg.seed = 3;
  cfg.task.name = TaskName::kTwoMode;
  cfg.bridge.source_mode = SourceMode::kGaussian;
  cfg.train.flow_enabled = false;
  const auto path = std::filesystem::temp_directory_path() / "resbridge_test_cfg.json";
  cfg.save(path.string());
  const RunConfig back = RunConfig::load(path.string());
  CHECK(back.hash() == cfg.hash());
  CHECK(back.task.name == TaskName::kTwoMode);
  CHECK(back.bridge.source_mode == SourceMode::kGaussian);
  CHECK(back.train.flow_enabled == false);
  std::filesystem::remove(path);
}

TEST_CASE("svg charts are well-formed and escape labels") {
  const auto path = std::filesystem::temp_directory_path() / "resbridge_test_chart.svg";
  std::vector<PlotSeries> series = {
      {"a<b & \"c\"", {{0, 0}, {1, 1}, {2, 4}}},
      {"other", {{0, 1}, {1, 0.5}, {2, 0.25}}},
  };
  write_line_chart(path.string(), "title <&>", "x", "y", series);
  const std::string svg = slurp(path);
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("a&lt;b &amp; &quot;c&quot;") != std::string::npos);
  CHECK(xml_well_formed(svg));
  std::filesystem::remove(path);

  // degenerate inputs still produce a valid document
  write_line_chart(path.string(), "empty", "x", "y", {});
  CHECK(xml_well_formed(slurp(path)));
  write_line_chart(path.string(), "flat", "x", "y", {{"s", {{1, 2}, {3, 2}}}});
  CHECK(xml_well_formed(slurp(path)));
  std::filesystem::remove(path);
}
