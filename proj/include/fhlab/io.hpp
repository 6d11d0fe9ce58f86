#pragma once

// Locale-free text and binary output. Doubles in CSV carry 17 significant
// digits so files round-trip and compare byte for byte.

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fhlab/errors.hpp"
#include "fhlab/pde.hpp"

namespace fhlab {

inline std::string fmt(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

inline std::string fmt(long long x) { return std::to_string(x); }
inline std::string fmt(unsigned long long x) { return std::to_string(x); }
inline std::string fmt(int x) { return std::to_string(x); }
inline std::string fmt(unsigned x) { return std::to_string(x); }
inline std::string fmt(long x) { return std::to_string(x); }
inline std::string fmt(unsigned long x) { return std::to_string(x); }
inline std::string fmt(const std::string& s) { return s; }
inline std::string fmt(const char* s) { return s; }

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { row_strings(header); }

    template <class... T>
    void row(const T&... v) {
        if (sizeof...(v) != cols_) throw ConfigError("csv row has the wrong number of columns");
        std::vector<std::string> cells{fmt(v)...};
        row_strings(cells);
    }

    const std::string& str() const { return out_; }

private:
    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ += ',';
            out_ += cells[i];
        }
        out_ += '\n';
    }
    std::size_t cols_;
    std::string out_;
};

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot open " + p.string() + " for writing");
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!f) throw ConfigError("write failed: " + p.string());
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

namespace detail {
template <class T>
void put(std::string& s, T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));  // little-endian hosts only
    s.append(b, sizeof(T));
}
template <class T>
T get(const std::string& s, std::size_t& pos) {
    if (pos + sizeof(T) > s.size()) throw ConfigError("truncated binary file");
    T v;
    std::memcpy(&v, s.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}
}  // namespace detail

// "FHLB", u32 version, u32 n_interior, u32 n_frames, then per frame
// t followed by n_interior + 2 doubles.
inline std::string encode_frames(const FieldTrajectory& tr) {
    std::string s = "FHLB";
    detail::put<std::uint32_t>(s, 1);
    detail::put<std::uint32_t>(s, static_cast<std::uint32_t>(tr.grid.n_interior));
    detail::put<std::uint32_t>(s, static_cast<std::uint32_t>(tr.frames.size()));
    for (std::size_t f = 0; f < tr.frames.size(); ++f) {
        detail::put<double>(s, tr.save_times[f]);
        for (double x : tr.frames[f]) detail::put<double>(s, x);
    }
    return s;
}

struct DecodedFrames {
    std::uint32_t n_interior = 0;
    std::vector<double> times;
    std::vector<Field> frames;
};

inline DecodedFrames decode_frames(const std::string& s) {
    if (s.size() < 16 || s.compare(0, 4, "FHLB") != 0) throw ConfigError("not a frame file");
    std::size_t pos = 4;
    if (detail::get<std::uint32_t>(s, pos) != 1) throw ConfigError("unsupported frame file version");
    DecodedFrames d;
    d.n_interior = detail::get<std::uint32_t>(s, pos);
    const auto nf = detail::get<std::uint32_t>(s, pos);
    for (std::uint32_t f = 0; f < nf; ++f) {
        d.times.push_back(detail::get<double>(s, pos));
        Field fr(d.n_interior + 2);
        for (double& x : fr) x = detail::get<double>(s, pos);
        d.frames.push_back(std::move(fr));
    }
    return d;
}

// "FHLI", u32 version, u32 K, u64 n_steps, then n_steps * K doubles.
inline std::string encode_increments(std::span<const double> inc, std::uint32_t K) {
    std::string s = "FHLI";
    detail::put<std::uint32_t>(s, 1);
    detail::put<std::uint32_t>(s, K);
    detail::put<std::uint64_t>(s, K ? inc.size() / K : 0);
    for (double x : inc) detail::put<double>(s, x);
    return s;
}

inline std::vector<double> decode_increments(const std::string& s, std::uint32_t& K) {
    if (s.size() < 20 || s.compare(0, 4, "FHLI") != 0) throw ConfigError("not an increment log");
    std::size_t pos = 4;
    if (detail::get<std::uint32_t>(s, pos) != 1) throw ConfigError("unsupported increment log version");
    K = detail::get<std::uint32_t>(s, pos);
    const auto n = detail::get<std::uint64_t>(s, pos);
    std::vector<double> v(n * K);
    for (double& x : v) x = detail::get<double>(s, pos);
    return v;
}

}  // namespace fhlab
