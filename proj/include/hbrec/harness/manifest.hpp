#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hbrec/harness/files.hpp"

namespace hbrec::harness {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Latest journal entry for one job.
struct JobRecord {
  std::string status;  ///< "done" or "failed"
  std::map<std::string, std::string> inputs;   ///< relative path -> sha256
  std::map<std::string, std::string> outputs;  ///< relative path -> sha256
  double seconds = 0;
  std::string error;
};

struct Issue {
  std::string job;
  std::string path;
  std::string problem;
};

/// Append-only journal `manifest.jsonl` under the run root. Every line
/// carries the hash of its predecessor, so edits to earlier lines break the
/// chain; recorded file hashes catch edits to the artifacts themselves.
class Manifest {
 public:
  static constexpr const char* kFileName = "manifest.jsonl";

  /// Opens or creates the journal. A torn final line (interrupted append)
  /// is dropped; any other inconsistency throws ManifestError.
  Manifest(fs::path root, const nlohmann::json& config) : root_(std::move(root)) {
    fs::create_directories(root_);
    const fs::path file = root_ / kFileName;
    if (fs::exists(file)) {
      load(file);
      if (header_config_ != config)
        throw ManifestError("run directory " + root_.string() +
                            " holds a run with a different configuration; use a fresh output directory");
    } else {
      append({{"kind", "header"}, {"config", config}});
    }
  }

  const fs::path& root() const noexcept { return root_; }
  bool fresh() const noexcept { return records_.empty(); }

  std::optional<JobRecord> record(const std::string& job) const {
    std::lock_guard lock(mu_);
    auto it = records_.find(job);
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  std::string hash_input(const std::string& rel) const { return file_sha256(root_ / rel); }

  /// Problems that make a recorded "done" job stale; empty means it is
  /// complete and may be skipped.
  std::vector<Issue> check(const std::string& job, const std::vector<std::string>& inputs) const {
    std::vector<Issue> issues;
    const auto rec = record(job);
    if (!rec) return {{job, "", "never completed"}};
    if (rec->status != "done") return {{job, "", "last attempt failed: " + rec->error}};
    for (const auto& [path, sha] : rec->outputs) {
      const std::string now = file_sha256(root_ / path);
      if (now.empty()) issues.push_back({job, path, "output missing"});
      else if (now != sha) issues.push_back({job, path, "output hash mismatch"});
    }
    std::map<std::string, std::string> current;
    for (const auto& p : inputs) current[p] = file_sha256(root_ / p);
    if (current != rec->inputs) issues.push_back({job, "", "inputs changed since completion"});
    return issues;
  }

  void record_done(const std::string& job, const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs, double seconds) {
    nlohmann::json in = nlohmann::json::object(), out = nlohmann::json::object();
    for (const auto& p : inputs) in[p] = file_sha256(root_ / p);
    for (const auto& p : outputs) out[p] = file_sha256(root_ / p);
    append({{"kind", "job"}, {"job", job}, {"status", "done"}, {"inputs", in}, {"outputs", out}, {"seconds", seconds}});
  }

  void record_failed(const std::string& job, const std::string& error, double seconds) {
    append({{"kind", "job"}, {"job", job}, {"status", "failed"}, {"error", error}, {"seconds", seconds}});
  }

  /// Verifies the journal chain and every recorded output of completed jobs.
  static std::vector<Issue> verify(const fs::path& root) {
    std::vector<Issue> issues;
    const fs::path file = root / kFileName;
    if (!fs::exists(file)) return {{"", kFileName, "manifest missing"}};
    std::map<std::string, JobRecord> records;
    try {
      Manifest m;
      m.root_ = root;
      m.load(file);
      records = m.records_;
    } catch (const ManifestError& e) {
      return {{"", kFileName, e.what()}};
    }
    for (const auto& [job, rec] : records) {
      if (rec.status != "done") continue;
      for (const auto& [path, sha] : rec.outputs) {
        const std::string now = file_sha256(root / path);
        if (now.empty()) issues.push_back({job, path, "output missing"});
        else if (now != sha) issues.push_back({job, path, "output hash mismatch"});
      }
    }
    return issues;
  }

 private:
  Manifest() = default;

  static std::string chain_hash(const std::string& prev, const nlohmann::json& body) {
    return sha256_hex(prev + "\n" + body.dump());
  }

  void load(const fs::path& file) {
    const std::string text = read_file(file);
    std::size_t pos = 0, line_no = 0, good_end = 0;
    while (pos < text.size()) {
      const std::size_t nl = text.find('\n', pos);
      if (nl == std::string::npos) break;  // torn tail, handled below
      const std::string line = text.substr(pos, nl - pos);
      ++line_no;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw ManifestError("manifest line " + std::to_string(line_no) + " is corrupt");
      }
      if (!j.contains("hash") || !j.contains("prev") || j.at("prev") != last_hash_)
        throw ManifestError("manifest hash chain broken at line " + std::to_string(line_no));
      nlohmann::json body = j;
      body.erase("hash");
      if (chain_hash(last_hash_, body) != j.at("hash"))
        throw ManifestError("manifest hash chain broken at line " + std::to_string(line_no));
      last_hash_ = j.at("hash").get<std::string>();
      if (j.at("kind") == "header") {
        header_config_ = j.at("config");
      } else {
        JobRecord r;
        r.status = j.at("status").get<std::string>();
        r.seconds = j.value("seconds", 0.0);
        r.error = j.value("error", std::string());
        if (j.contains("inputs")) r.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        if (j.contains("outputs")) r.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
        records_[j.at("job").get<std::string>()] = std::move(r);
      }
      pos = nl + 1;
      good_end = pos;
    }
    if (line_no == 0) throw ManifestError("manifest has no header");
    if (good_end != text.size()) write_file_atomic(file, text.substr(0, good_end));
  }

  void append(nlohmann::json body) {
    std::lock_guard lock(mu_);
    body["prev"] = last_hash_;
    const std::string h = chain_hash(last_hash_, body);
    body["hash"] = h;
    const std::string line = body.dump() + "\n";
    const fs::path file = root_ / kFileName;
    const int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw ManifestError("cannot append to " + file.string());
    const ssize_t n = ::write(fd, line.data(), line.size());
    ::fsync(fd);
    ::close(fd);
    if (n != static_cast<ssize_t>(line.size())) throw ManifestError("short write to " + file.string());
    last_hash_ = h;
    if (body.at("kind") == "job") {
      JobRecord r;
      r.status = body.at("status").get<std::string>();
      r.seconds = body.value("seconds", 0.0);
      r.error = body.value("error", std::string());
      if (body.contains("inputs")) r.inputs = body.at("inputs").get<std::map<std::string, std::string>>();
      if (body.contains("outputs")) r.outputs = body.at("outputs").get<std::map<std::string, std::string>>();
      records_[body.at("job").get<std::string>()] = std::move(r);
    }
  }

  fs::path root_;
  nlohmann::json header_config_;
  std::string last_hash_;
  std::map<std::string, JobRecord> records_;
  mutable std::mutex mu_;
};

}  // namespace hbrec::harness
