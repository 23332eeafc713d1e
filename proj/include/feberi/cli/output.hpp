#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "feberi/errors.hpp"

namespace feberi::cli {

inline constexpr const char* tool_version = "1.0.0";
inline constexpr int manifest_schema_version = 1;
inline constexpr int csv_schema_version = 1;

inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Column-contract CSV: '#' metadata lines, one header line, then rows.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& kind, std::vector<std::string> columns,
              const std::vector<std::pair<std::string, std::string>>& meta = {})
        : out_(path), ncol_(columns.size()) {
        if (!out_) throw ConfigError(path.string() + ": cannot open for writing");
        out_ << "# schema: feberi-csv/" << csv_schema_version << "\n";
        out_ << "# kind: " << kind << "\n";
        out_ << "# manifest: manifest.json\n";
        for (const auto& [k, v] : meta) out_ << "# " << k << ": " << v << "\n";
        for (size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << "\n";
    }
    void row(const std::vector<double>& v) {
        if (v.size() != ncol_) throw ConfigError("csv row width does not match its header");
        for (size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << fmt(v[i]);
        out_ << "\n";
    }
    // Rows that start with a text label.
    void row(const std::string& label, const std::vector<double>& v) {
        if (v.size() + 1 != ncol_) throw ConfigError("csv row width does not match its header");
        out_ << label;
        for (double x : v) out_ << "," << fmt(x);
        out_ << "\n";
    }

private:
    std::ofstream out_;
    size_t ncol_;
};

struct Manifest {
    nlohmann::json doc;
    std::filesystem::path dir;

    Manifest(const std::filesystem::path& out_dir, const std::string& command, const nlohmann::json& config)
        : dir(out_dir) {
        std::filesystem::create_directories(dir);
        doc["schema_version"] = manifest_schema_version;
        doc["tool_version"] = tool_version;
        doc["command"] = command;
        doc["config"] = config;
        doc["derived"] = nlohmann::json::object();
        doc["validation"] = nlohmann::json::object();
        doc["outputs"] = nlohmann::json::array();
        doc["inferred"] = config.contains("meta") ? config["meta"]["inferred"] : nlohmann::json::array();
        doc["warnings"] = nlohmann::json::array();
        doc["timestamps"] = {{"started", utc_now()}};
    }
    std::filesystem::path output(const std::string& name) {
        doc["outputs"].push_back(name);
        return dir / name;
    }
    void warn(const std::string& w) { doc["warnings"].push_back(w); }
    // Records a pass/fail check; returns whether it passed.
    bool gate(const std::string& name, double value, double limit) {
        const bool ok = value <= limit;
        doc["validation"][name] = {{"value", value}, {"limit", limit}, {"passed", ok}};
        return ok;
    }
    void write() {
        doc["timestamps"]["finished"] = utc_now();
        std::ofstream f(dir / "manifest.json");
        if (!f) throw ConfigError((dir / "manifest.json").string() + ": cannot open for writing");
        f << doc.dump(2) << "\n";
    }
};

// Runs body(i) for i in [0, n) on up to `threads` workers; the first exception is rethrown.
inline void parallel_for(int n, int threads, const std::function<void(int)>& body) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex m;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(m);
                    if (!err) err = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace feberi::cli
