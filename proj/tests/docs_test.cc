/* Copyright 2026 The EvDistill Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace {

namespace fs = std::filesystem;

const fs::path kRoot = EVDISTILL_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<fs::path> documents() {
  std::vector<fs::path> docs = {kRoot / "README.md"};
  for (const auto& e : fs::directory_iterator(kRoot / "docs"))
    if (e.path().extension() == ".md") docs.push_back(e.path());
  return docs;
}

// Lines outside fenced and indented code blocks.
std::vector<std::string> prose_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  std::string line;
  bool fenced = false;
  while (std::getline(in, line)) {
    if (line.starts_with("```")) {
      fenced = !fenced;
      continue;
    }
    if (!fenced && !line.starts_with("    ")) out.push_back(line);
  }
  return out;
}

// GitHub heading anchor: lowercase, punctuation dropped, spaces to hyphens.
std::string slug(const std::string& heading) {
  std::string out;
  for (unsigned char c : heading) {
    if (std::isalnum(c) || c == '-' || c == '_' || c >= 0x80) {
      out += static_cast<char>(std::tolower(c));
    } else if (c == ' ') {
      out += '-';
    }
  }
  return out;
}

std::set<std::string> anchors(const fs::path& p) {
  std::set<std::string> out;
  for (const std::string& line : prose_lines(p)) {
    if (!line.starts_with("#")) continue;
    const size_t start = line.find_first_not_of('#');
    if (start == std::string::npos || line[start] != ' ') continue;
    out.insert(slug(line.substr(start + 1)));
  }
  return out;
}

struct Link {
  fs::path source;
  std::string target;
};

std::vector<Link> links() {
  static const std::regex pattern(R"(\[[^\]]*\]\(([^)\s]+)\))");
  std::vector<Link> out;
  for (const fs::path& doc : documents()) {
    for (const std::string& line : prose_lines(doc)) {
      for (std::sregex_iterator it(line.begin(), line.end(), pattern), end; it != end; ++it) {
        out.push_back({doc, (*it)[1].str()});
      }
    }
  }
  return out;
}

TEST(DocsLinks, RelativeTargetsExist) {
  size_t checked = 0;
  for (const Link& link : links()) {
    if (link.target.starts_with("http://") || link.target.starts_with("https://")) continue;
    const std::string file = link.target.substr(0, link.target.find('#'));
    if (file.empty()) continue;
    EXPECT_TRUE(fs::exists(link.source.parent_path() / file)) << link.source << " -> " << link.target;
    ++checked;
  }
  EXPECT_GT(checked, 10u);
}

TEST(DocsLinks, AnchorsExist) {
  size_t checked = 0;
  for (const Link& link : links()) {
    const size_t hash = link.target.find('#');
    if (hash == std::string::npos || link.target.starts_with("http")) continue;
    const std::string file = link.target.substr(0, hash);
    const fs::path target = file.empty() ? link.source : link.source.parent_path() / file;
    ASSERT_TRUE(fs::exists(target)) << link.target;
    EXPECT_TRUE(anchors(target).contains(link.target.substr(hash + 1)))
        << link.source << " -> " << link.target;
    ++checked;
  }
  EXPECT_GT(checked, 20u);
}

std::set<std::string> defined_tests() {
  static const std::regex pattern(R"(\bTEST(?:_F)?\((\w+),\s*(\w+)\))");
  std::set<std::string> out;
  for (const auto& e : fs::directory_iterator(kRoot / "tests")) {
    if (e.path().extension() != ".cc") continue;
    const std::string text = slurp(e.path());
    for (std::sregex_iterator it(text.begin(), text.end(), pattern), end; it != end; ++it) {
      out.insert((*it)[1].str() + "." + (*it)[2].str());
    }
  }
  return out;
}

TEST(DocsTests, ReferencedTestsExist) {
  static const std::regex pattern(R"(`([A-Z]\w*\.[A-Z]\w*)`)");
  const std::set<std::string> tests = defined_tests();
  size_t checked = 0;
  for (const fs::path& doc : documents()) {
    const std::string text = slurp(doc);
    for (std::sregex_iterator it(text.begin(), text.end(), pattern), end; it != end; ++it) {
      EXPECT_TRUE(tests.contains((*it)[1].str())) << doc.filename() << ": " << (*it)[1].str();
      ++checked;
    }
  }
  EXPECT_GT(checked, 50u);
}

TEST(DocsEquations, EverySectionNamesTests) {
  std::string section;
  bool has_tests = true;
  for (const std::string& line : prose_lines(kRoot / "docs" / "EQUATIONS.md")) {
    if (line.starts_with("## ")) {
      EXPECT_TRUE(section.empty() || has_tests) << section;
      section = line.substr(3);
      has_tests = false;
    }
    if (line.starts_with("- Tests:")) has_tests = true;
  }
  EXPECT_TRUE(has_tests) << section;
}

}  // namespace
