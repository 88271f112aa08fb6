#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

// Shared scaffolding for the test binaries: throwaway directories and a
// gateway wired to an instrumented mock backend.

namespace testutil {

inline std::filesystem::path unique_temp_dir(const std::string& tag) {
    static std::mt19937_64 rng{std::random_device{}()};
    auto base = std::filesystem::temp_directory_path();
    for (;;) {
        auto candidate = base / (tag + "-" + std::to_string(rng()));
        if (std::filesystem::create_directories(candidate)) return candidate;
    }
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag = "rubric-test") : path(unique_temp_dir(tag)) {}
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    std::string str() const { return path.string(); }
    std::string file(const std::string& name, const std::string& content) const {
        auto p = path / name;
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p.string();
    }
};

}  // namespace testutil
