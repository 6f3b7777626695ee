#include "chirpjoint/datacube_io.hpp"

#include "chirpjoint/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace chirpjoint {

namespace {

template <typename T>
void put_le(std::vector<unsigned char>& buf, std::size_t pos, T value) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[pos + i] = static_cast<unsigned char>(bits >> (8 * i));
}

template <typename T>
T get_le(const unsigned char* p) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
    return std::bit_cast<T>(bits);
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::Io, "cannot open cube file " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CubeHeader parse_header(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
    if (bytes.size() < kCubeMagic.size() || std::memcmp(bytes.data(), kCubeMagic.data(), kCubeMagic.size()) != 0) {
        throw FormatError(FormatError::Kind::BadMagic, "bad magic bytes in " + path.string());
    }
    if (bytes.size() < kCubeHeaderSize) {
        throw FormatError(FormatError::Kind::Truncated, "truncated header in " + path.string());
    }
    const unsigned char* p = bytes.data();
    CubeHeader h;
    h.version = get_le<std::uint32_t>(p + 8);
    if (h.version != kCubeVersion) {
        throw FormatError(FormatError::Kind::Mismatch, "unsupported cube version " + std::to_string(h.version));
    }
    h.sequences = get_le<std::uint32_t>(p + 12);
    h.chirps = get_le<std::uint32_t>(p + 16);
    h.samples_per_chirp = get_le<std::uint32_t>(p + 20);
    h.sample_rate_hz = get_le<double>(p + 24);
    h.chirp_repetition_interval_s = get_le<double>(p + 32);
    h.offsets_pos = get_le<std::uint64_t>(p + 40);
    h.payload_pos = get_le<std::uint64_t>(p + 48);
    h.payload_count = get_le<std::uint64_t>(p + 56);

    if (h.offsets_pos + 8ull * h.sequences > bytes.size()) {
        throw FormatError(FormatError::Kind::Truncated, "truncated offset table in " + path.string());
    }
    for (std::uint32_t l = 0; l < h.sequences; ++l) {
        h.sequence_offsets_s.push_back(get_le<double>(p + h.offsets_pos + 8ull * l));
    }
    return h;
}

[[noreturn]] void mismatch(const std::string& field, double header, double scenario) {
    std::ostringstream os;
    os.precision(17);
    os << "cube header/scenario mismatch on " << field << ": header " << header << ", scenario " << scenario;
    throw FormatError(FormatError::Kind::Mismatch, os.str());
}

} // namespace

void store_cube(const RawDataCube& c, const std::filesystem::path& path) {
    const auto& s = c.scenario();
    const std::uint64_t L = c.sequences();
    const std::uint64_t count = c.samples().size();
    const std::uint64_t offsets_pos = kCubeHeaderSize;
    const std::uint64_t payload_pos = offsets_pos + 8 * L;

    std::vector<unsigned char> buf(payload_pos + 8 * count);
    std::memcpy(buf.data(), kCubeMagic.data(), kCubeMagic.size());
    put_le(buf, 8, kCubeVersion);
    put_le(buf, 12, static_cast<std::uint32_t>(L));
    put_le(buf, 16, static_cast<std::uint32_t>(c.chirps()));
    put_le(buf, 20, static_cast<std::uint32_t>(c.samples_per_chirp()));
    put_le(buf, 24, s.waveform.sample_rate_hz);
    put_le(buf, 32, s.tri());
    put_le(buf, 40, offsets_pos);
    put_le(buf, 48, payload_pos);
    put_le(buf, 56, count);
    for (std::uint64_t l = 0; l < L; ++l) put_le(buf, offsets_pos + 8 * l, s.plan.sequence_offsets_s[l]);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto& v = c.samples()[i];
        put_le(buf, payload_pos + 8 * i, static_cast<float>(v.real()));
        put_le(buf, payload_pos + 8 * i + 4, static_cast<float>(v.imag()));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::Io, "cannot write cube file " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError(FormatError::Kind::Io, "write failed for " + path.string());
}

CubeHeader read_cube_header(const std::filesystem::path& path) {
    return parse_header(read_all(path), path);
}

RadarScenario scenario_from_header(const CubeHeader& h, RadarScenario base) {
    base.plan.chirps_per_sequence = static_cast<int>(h.chirps);
    base.plan.sequence_offsets_s = h.sequence_offsets_s;
    base.waveform = WaveformConfig::make(base.waveform.bandwidth_hz, base.waveform.carrier_hz, h.sample_rate_hz,
                                         static_cast<int>(h.samples_per_chirp), h.chirp_repetition_interval_s);
    return base;
}

RawDataCube load_cube(const std::filesystem::path& path, const RadarScenario& s) {
    const auto bytes = read_all(path);
    const CubeHeader h = parse_header(bytes, path);

    if (h.sequences != static_cast<std::uint32_t>(s.num_sequences())) mismatch("L", h.sequences, s.num_sequences());
    if (h.chirps != static_cast<std::uint32_t>(s.chirps())) mismatch("M", h.chirps, s.chirps());
    if (h.samples_per_chirp != static_cast<std::uint32_t>(s.fast_time_samples()))
        mismatch("N", h.samples_per_chirp, s.fast_time_samples());
    if (h.sample_rate_hz != s.waveform.sample_rate_hz) mismatch("f_s", h.sample_rate_hz, s.waveform.sample_rate_hz);
    if (h.chirp_repetition_interval_s != s.tri()) mismatch("T_ri", h.chirp_repetition_interval_s, s.tri());
    for (std::size_t l = 0; l < h.sequence_offsets_s.size(); ++l) {
        if (h.sequence_offsets_s[l] != s.plan.sequence_offsets_s[l])
            mismatch("T_" + std::to_string(l + 1), h.sequence_offsets_s[l], s.plan.sequence_offsets_s[l]);
    }

    const std::uint64_t expected = static_cast<std::uint64_t>(h.sequences) * h.chirps * h.samples_per_chirp;
    if (h.payload_count != expected) {
        throw FormatError(FormatError::Kind::Mismatch, "payload count " + std::to_string(h.payload_count) +
                                                           " does not match L*M*N = " + std::to_string(expected));
    }
    if (h.payload_pos + 8 * expected > bytes.size()) {
        throw FormatError(FormatError::Kind::Truncated, "truncated payload in " + path.string() + ": need " +
                                                            std::to_string(h.payload_pos + 8 * expected) +
                                                            " bytes, have " + std::to_string(bytes.size()));
    }

    std::vector<cd> samples(expected);
    const unsigned char* p = bytes.data() + h.payload_pos;
    for (std::uint64_t i = 0; i < expected; ++i) {
        samples[i] = cd(get_le<float>(p + 8 * i), get_le<float>(p + 8 * i + 4));
    }
    return RawDataCube(std::make_shared<const RadarScenario>(s), std::move(samples));
}

} // namespace chirpjoint
