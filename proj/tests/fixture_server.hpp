/*
 * Copyright 2026 The rlface Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Local HTTP server standing in for the SPARQL endpoint, the encyclopedia and
// the image host. Serves tests/fixtures/pipeline.

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <regex>
#include <string>
#include <thread>

#include <json.hpp>

#include "rlface/core/hash.hpp"
#include "rlface/ingest/http.hpp"

namespace rlface::testutil {

class FixtureServer {
 public:
  explicit FixtureServer(std::filesystem::path root) : root_(std::move(root)) {
    bindings_text_ = read_file(root_ / "sparql" / "bindings.json");
    server_.Get("/sparql", [this](const httplib::Request& req, httplib::Response& res) { sparql(req, res); });
    server_.Get(R"(/wiki/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (fail(req.path, res)) return;
      const auto p = root_ / "wiki" / (req.matches[1].str() + ".html");
      if (!std::filesystem::exists(p)) {
        res.status = 404;
        return;
      }
      res.set_content(read_file(p), "text/html; charset=utf-8");
    });
    server_.Get(R"(/images/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (fail(req.path, res)) return;
      const auto p = root_ / "images" / req.matches[1].str();
      if (!std::filesystem::exists(p)) {
        res.status = 404;
        return;
      }
      res.set_content(read_file(p), "image/jpeg");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FixtureServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }

  // The next `n` requests to `path` answer with `status`.
  void inject_failures(const std::string& path, int n, int status = 503) {
    std::lock_guard lock(mu_);
    failures_[path] = {n, status};
  }

  int hits(const std::string& path_prefix) const {
    std::lock_guard lock(mu_);
    int n = 0;
    for (const auto& [p, c] : hits_)
      if (p.rfind(path_prefix, 0) == 0) n += c;
    return n;
  }

 private:
  bool fail(const std::string& path, httplib::Response& res) {
    std::lock_guard lock(mu_);
    ++hits_[path];
    auto it = failures_.find(path);
    if (it == failures_.end() || it->second.first == 0) return false;
    --it->second.first;
    res.status = it->second.second;
    return true;
  }

  void sparql(const httplib::Request& req, httplib::Response& res) {
    if (fail(req.path, res)) return;
    const std::string q = req.get_param_value("query");
    std::smatch m;
    static const std::regex year_re(R"(YEAR\(\?d\) = (\d+))"), page_re(R"(LIMIT (\d+) OFFSET (\d+))");
    if (!std::regex_search(q, m, year_re)) {
      res.status = 400;
      return;
    }
    const std::string year = m[1];
    std::size_t limit = 1000000, offset = 0;
    if (std::regex_search(q, m, page_re)) {
      limit = std::stoul(m[1]);
      offset = std::stoul(m[2]);
    }
    std::string text = bindings_text_;
    for (std::size_t pos; (pos = text.find("{{BASE}}")) != std::string::npos;) text.replace(pos, 8, base());
    const auto all = nlohmann::json::parse(text);
    nlohmann::json rows = nlohmann::json::array();
    if (all.contains(year)) {
      const auto& ys = all[year];
      for (std::size_t i = offset; i < ys.size() && i < offset + limit; ++i) rows.push_back(ys[i]);
    }
    nlohmann::json doc{{"head", {{"vars", nlohmann::json::array()}}}, {"results", {{"bindings", rows}}}};
    res.set_content(doc.dump(), "application/sparql-results+json");
  }

  std::filesystem::path root_;
  std::string bindings_text_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::map<std::string, std::pair<int, int>> failures_;
  std::map<std::string, int> hits_;
};

}  // namespace rlface::testutil
