#pragma once

// Spawning helpers for end-to-end CLI tests. The binary path arrives via the
// TAIYI_CLI environment variable set by CMake.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace cli {

inline std::string binary() {
    const char* path = std::getenv("TAIYI_CLI");
    if (!path || !*path) throw std::runtime_error("TAIYI_CLI not set");
    return path;
}

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

inline RunResult run(const std::string& args, const std::filesystem::path& log_dir) {
    std::filesystem::create_directories(log_dir);
    const auto log = log_dir / "cli_output.txt";
    const std::string cmd = binary() + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream f(log);
    std::stringstream ss;
    ss << f.rdbuf();
    r.output = ss.str();
    return r;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    f << text;
}

// Recursive byte comparison of two artifact directories.
inline bool dirs_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
    namespace fs = std::filesystem;
    std::vector<std::string> rel_a, rel_b;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a).string());
    }
    for (const auto& e : fs::recursive_directory_iterator(b)) {
        if (e.is_regular_file()) rel_b.push_back(fs::relative(e.path(), b).string());
    }
    std::sort(rel_a.begin(), rel_a.end());
    std::sort(rel_b.begin(), rel_b.end());
    if (rel_a != rel_b) return false;
    for (const auto& rel : rel_a) {
        if (slurp(a / rel) != slurp(b / rel)) return false;
    }
    return true;
}

}  // namespace cli
