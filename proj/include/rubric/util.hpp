#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace rubric {

std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);

// Seeded bit/shuffle source with a stable cross-platform stream
// (std::mt19937 streams are fine, but Fisher-Yates via std::shuffle is
// implementation-defined; goldens must not depend on the standard library).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }
    // Unbiased draw in [0, n).
    std::uint64_t below(std::uint64_t n);
    bool coin() { return (next() >> 63) != 0; }
    double uniform();  // [0, 1)

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::uint64_t state_;
};

// Extracts the first ```json fenced block from model output; if no fence
// exists, falls back to the first balanced top-level JSON object.
// Throws NoJsonFound / JsonMalformed (with byte offset).
nlohmann::json extract_json(const std::string& text);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace rubric
