#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsbl/dwt53.hpp"
#include "bsbl/errors.hpp"
#include "bsbl/sensing.hpp"

namespace bsbl::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline constexpr std::array<char, 8> kMeasurementMagic = {'B', 'S', 'B', 'L',
                                                         'M', 'E', 'A', 'S'};
inline constexpr std::array<char, 8> kDwtMagic = {'B', 'S', 'B', 'L',
                                                  'D', 'W', 'T', 'S'};

// ---------------------------------------------------------------- matrix

/// Header-only matrix representation: the decoder regenerates the full
/// matrix from (m, n, k, seed).
inline std::string matrix_header_json(const SparseBinaryMatrix& phi) {
    nlohmann::json j;
    j["format_version"] = SparseBinaryMatrix::format_version;
    j["m"] = phi.rows();
    j["n"] = phi.cols();
    j["k"] = phi.ones_per_column();
    j["seed"] = phi.seed();
    return j.dump(2) + "\n";
}

inline SparseBinaryMatrix matrix_from_header_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("matrix header: ") + e.what());
    }
    if (!j.contains("m") || !j.contains("n") || !j.contains("k") || !j.contains("seed"))
        throw io_error("matrix header: missing m/n/k/seed");
    return SparseBinaryMatrix::generate(j["m"].get<int>(), j["n"].get<int>(),
                                        j["k"].get<int>(),
                                        j["seed"].get<std::uint64_t>());
}

// ----------------------------------------------------------- measurements

/// CSV, one packet per row.
inline void write_measurements_csv(std::ostream& os,
                                   const std::vector<Measurement>& meas) {
    os << std::setprecision(17);
    for (const auto& m : meas) {
        for (Eigen::Index i = 0; i < m.values.size(); ++i) {
            if (i) os << ',';
            os << m.values(i);
        }
        os << '\n';
    }
}

inline std::vector<Measurement> read_measurements_csv(std::istream& is) {
    std::vector<Measurement> out;
    std::string line;
    std::size_t idx = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw io_error("measurements: non-numeric cell '" + cell + "'");
            }
        }
        Measurement m;
        m.values = Eigen::Map<Eigen::VectorXd>(row.data(),
                                               static_cast<Eigen::Index>(row.size()));
        m.packet_index = idx++;
        out.push_back(std::move(m));
    }
    return out;
}

/// Binary: 8-byte magic, uint32 packet count, uint32 packet length, then
/// little-endian float64 values packet-major.
inline void write_measurements_binary(std::ostream& os,
                                      const std::vector<Measurement>& meas) {
    os.write(kMeasurementMagic.data(), kMeasurementMagic.size());
    const auto count = static_cast<std::uint32_t>(meas.size());
    const auto len = meas.empty() ? std::uint32_t{0}
                                  : static_cast<std::uint32_t>(meas[0].values.size());
    os.write(reinterpret_cast<const char*>(&count), sizeof(count));
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    for (const auto& m : meas) {
        if (static_cast<std::uint32_t>(m.values.size()) != len)
            throw io_error("measurements: ragged packet lengths");
        os.write(reinterpret_cast<const char*>(m.values.data()),
                 static_cast<std::streamsize>(sizeof(double) * len));
    }
}

inline std::vector<Measurement> read_measurements_binary(std::istream& is) {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMeasurementMagic)
        throw io_error("measurements: bad magic");
    std::uint32_t count = 0, len = 0;
    is.read(reinterpret_cast<char*>(&count), sizeof(count));
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!is) throw io_error("measurements: truncated header");
    std::vector<Measurement> out(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        out[i].values.resize(len);
        out[i].packet_index = i;
        is.read(reinterpret_cast<char*>(out[i].values.data()),
                static_cast<std::streamsize>(sizeof(double) * len));
        if (!is) throw io_error("measurements: truncated payload");
    }
    return out;
}

// ------------------------------------------------------------ dwt streams

namespace detail {

inline void write_varint(std::ostream& os, std::uint32_t v) {
    while (v >= 0x80) {
        const char byte = static_cast<char>((v & 0x7F) | 0x80);
        os.put(byte);
        v >>= 7;
    }
    os.put(static_cast<char>(v));
}

inline std::uint32_t read_varint(std::istream& is) {
    std::uint32_t v = 0;
    int shift = 0;
    while (true) {
        const int c = is.get();
        if (c == EOF) throw io_error("dwt stream: truncated varint");
        v |= static_cast<std::uint32_t>(c & 0x7F) << shift;
        if (!(c & 0x80)) break;
        shift += 7;
        if (shift > 28) throw io_error("dwt stream: varint overflow");
    }
    return v;
}

} // namespace detail

/// Per stream: magic, header {n: u32, stages: u8, T: u8, count: u32},
/// delta-encoded varint locations, then int32 LE values.
inline void write_dwt_stream(std::ostream& os, const ThresholdedStream& s) {
    os.write(kDwtMagic.data(), kDwtMagic.size());
    const auto n = static_cast<std::uint32_t>(s.n);
    const auto stages = static_cast<std::uint8_t>(s.stages);
    const auto t = static_cast<std::uint8_t>(s.t);
    const auto count = static_cast<std::uint32_t>(s.values.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(&stages), sizeof(stages));
    os.write(reinterpret_cast<const char*>(&t), sizeof(t));
    os.write(reinterpret_cast<const char*>(&count), sizeof(count));
    std::uint32_t prev = 0;
    for (std::size_t i = 0; i < s.locations.size(); ++i) {
        const std::uint32_t delta = (i == 0) ? s.locations[0] : s.locations[i] - prev;
        detail::write_varint(os, delta);
        prev = s.locations[i];
    }
    for (std::int32_t v : s.values)
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline ThresholdedStream read_dwt_stream(std::istream& is) {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kDwtMagic)
        throw io_error("dwt stream: bad magic");
    std::uint32_t n = 0, count = 0;
    std::uint8_t stages = 0, t = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    is.read(reinterpret_cast<char*>(&stages), sizeof(stages));
    is.read(reinterpret_cast<char*>(&t), sizeof(t));
    is.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!is) throw io_error("dwt stream: truncated header");
    ThresholdedStream s;
    s.n = static_cast<int>(n);
    s.stages = stages;
    s.t = t;
    s.locations.resize(count);
    s.values.resize(count);
    std::uint32_t pos = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        pos += detail::read_varint(is);
        s.locations[i] = pos;
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        is.read(reinterpret_cast<char*>(&s.values[i]), sizeof(std::int32_t));
        if (!is) throw io_error("dwt stream: truncated values");
    }
    return s;
}

// ---------------------------------------------------------------- signals

/// Samples separated by newlines and/or commas.
inline Eigen::VectorXd read_signal_csv(std::istream& is) {
    std::vector<double> samples;
    std::string line;
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            // trim whitespace-only cells
            if (cell.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                samples.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw io_error("signal csv: non-numeric cell '" + cell + "'");
            }
        }
    }
    return Eigen::Map<Eigen::VectorXd>(samples.data(),
                                       static_cast<Eigen::Index>(samples.size()));
}

inline void write_signal_csv(std::ostream& os, const Eigen::VectorXd& x) {
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < x.size(); ++i)
        os << x(i) << '\n';
}

inline std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace bsbl::io
