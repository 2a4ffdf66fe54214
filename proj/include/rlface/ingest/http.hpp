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

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
// <resolv.h> (pulled in by httplib) defines _res as a macro, which collides
// with parameter names in Eigen.
#undef _res

#include "rlface/core/error.hpp"

namespace rlface::ingest {

struct Url {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path;  // includes query string, starts with '/'

  std::string origin() const {
    const bool default_port = (scheme == "http" && port == 80) || (scheme == "https" && port == 443);
    return scheme + "://" + host + (default_port ? "" : ":" + std::to_string(port));
  }
  std::string str() const { return origin() + path; }
};

inline Url parse_url(std::string_view text) {
  Url u;
  const auto sep = text.find("://");
  if (sep == std::string_view::npos) throw StructuralError("not an absolute URL: " + std::string(text));
  u.scheme = std::string(text.substr(0, sep));
  if (u.scheme != "http" && u.scheme != "https")
    throw StructuralError("unsupported URL scheme: " + std::string(text));
  auto rest = text.substr(sep + 3);
  const auto slash = rest.find('/');
  auto authority = rest.substr(0, slash);
  u.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  const auto colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    u.host = std::string(authority.substr(0, colon));
    u.port = std::stoi(std::string(authority.substr(colon + 1)));
  } else {
    u.host = std::string(authority);
    u.port = u.scheme == "https" ? 443 : 80;
  }
  if (u.host.empty()) throw StructuralError("URL without host: " + std::string(text));
  return u;
}

// Resolves `ref` (absolute, protocol-relative or root-relative) against `base`.
inline std::string resolve_url(const Url& base, std::string_view ref) {
  if (ref.find("://") != std::string_view::npos) return std::string(ref);
  if (ref.substr(0, 2) == "//") return base.scheme + ":" + std::string(ref);
  if (!ref.empty() && ref[0] == '/') return base.origin() + std::string(ref);
  auto dir = base.path.substr(0, base.path.rfind('/') + 1);
  return base.origin() + dir + std::string(ref);
}

inline std::string url_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string content_type;
};

// Minimal GET interface so every network operation can run against recorded
// fixtures.
class HttpClient {
 public:
  virtual ~HttpClient() = default;
  // Returns any HTTP status; throws TransportError only when no response was
  // received at all.
  virtual HttpResponse get(const std::string& url,
                           const std::multimap<std::string, std::string>& headers = {}) = 0;
};

class HttplibClient : public HttpClient {
 public:
  explicit HttplibClient(std::string user_agent = "rlface/1.0 (research dataset builder)",
                         std::chrono::seconds timeout = std::chrono::seconds(60))
      : user_agent_(std::move(user_agent)), timeout_(timeout) {}

  HttpResponse get(const std::string& url,
                   const std::multimap<std::string, std::string>& headers = {}) override {
    const Url u = parse_url(url);
    httplib::Client client(u.origin());
    client.set_follow_location(true);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    httplib::Headers h(headers.begin(), headers.end());
    h.emplace("User-Agent", user_agent_);
    auto res = client.Get(u.path, h);
    if (!res) {
      throw TransportError("GET " + url + " failed: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body, res->get_header_value("Content-Type")};
  }

 private:
  std::string user_agent_;
  std::chrono::seconds timeout_;
};

// Spaces requests to the same host at least `1 / rate` seconds apart. Shared
// by all fetch workers.
class HostRateLimiter {
 public:
  explicit HostRateLimiter(double requests_per_second = 2.0)
      : interval_(requests_per_second > 0
                      ? std::chrono::duration_cast<Clock::duration>(
                            std::chrono::duration<double>(1.0 / requests_per_second))
                      : Clock::duration::zero()) {}

  void acquire(const std::string& host) {
    if (interval_ == Clock::duration::zero()) return;
    Clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      const auto now = Clock::now();
      auto& next = next_[host];
      slot = std::max(now, next);
      next = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  using Clock = std::chrono::steady_clock;
  Clock::duration interval_;
  std::mutex mu_;
  std::map<std::string, Clock::time_point> next_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
};

// Adds per-host politeness and exponential backoff on 429, 5xx and transport
// failures. Other statuses (including 404) are returned to the caller.
class PoliteClient : public HttpClient {
 public:
  PoliteClient(HttpClient& inner, HostRateLimiter& limiter, RetryPolicy retry = {})
      : inner_(inner), limiter_(limiter), retry_(retry) {}

  HttpResponse get(const std::string& url,
                   const std::multimap<std::string, std::string>& headers = {}) override {
    const std::string host = parse_url(url).host;
    auto backoff = retry_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
      limiter_.acquire(host);
      int status = 0;
      std::string why;
      try {
        HttpResponse res = inner_.get(url, headers);
        if (res.status != 429 && res.status < 500) return res;
        status = res.status;
        why = "HTTP " + std::to_string(res.status);
      } catch (const TransportError& e) {
        why = e.what();
      }
      if (attempt >= retry_.max_attempts) {
        throw TransportError("GET " + url + " gave up after " + std::to_string(attempt) +
                                 " attempts: " + why,
                             status);
      }
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * retry_.multiplier));
    }
  }

 private:
  HttpClient& inner_;
  HostRateLimiter& limiter_;
  RetryPolicy retry_;
};

}  // namespace rlface::ingest
