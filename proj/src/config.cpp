#include "chirpjoint/config.hpp"

#include "chirpjoint/errors.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace chirpjoint {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* name, const std::string& where) {
    if (!j.is_object() || !j.contains(name)) throw InvalidArgument(where + ": missing field '" + name + "'");
    return j.at(name);
}

template <typename T>
T get(const json& j, const char* name, const std::string& where) {
    try {
        return field(j, name, where).get<T>();
    } catch (const json::exception& e) {
        throw InvalidArgument(where + "." + name + ": " + e.what());
    }
}

} // namespace

json scenario_to_json(const RadarScenario& s) {
    const auto& w = s.waveform;
    return {
        {"waveform",
         {{"bandwidth_hz", w.bandwidth_hz},
          {"carrier_hz", w.carrier_hz},
          {"sample_rate_hz", w.sample_rate_hz},
          {"fast_time_samples", w.fast_time_samples},
          {"chirp_slope_hz_per_s", w.chirp_slope_hz_per_s},
          {"chirp_repetition_interval_s", w.chirp_repetition_interval_s}}},
        {"plan",
         {{"chirps_per_sequence", s.plan.chirps_per_sequence}, {"sequence_offsets_s", s.plan.sequence_offsets_s}}},
        {"ddm", {{"ddm_freqs_hz", s.ddm.ddm_freqs_hz}, {"tx_positions_m", s.ddm.tx_positions_m}}},
        {"num_rx", s.num_rx},
        {"noise_variance", s.noise_variance},
    };
}

RadarScenario scenario_from_json(const json& j) {
    RadarScenario s;
    const json& w = field(j, "waveform", "scenario");
    s.waveform = WaveformConfig::make(get<double>(w, "bandwidth_hz", "waveform"), get<double>(w, "carrier_hz", "waveform"),
                                      get<double>(w, "sample_rate_hz", "waveform"),
                                      get<int>(w, "fast_time_samples", "waveform"),
                                      get<double>(w, "chirp_repetition_interval_s", "waveform"));
    if (w.contains("chirp_slope_hz_per_s")) {
        s.waveform.chirp_slope_hz_per_s = get<double>(w, "chirp_slope_hz_per_s", "waveform");
    }

    const json& p = field(j, "plan", "scenario");
    s.plan.chirps_per_sequence = get<int>(p, "chirps_per_sequence", "plan");
    s.plan.sequence_offsets_s = get<std::vector<double>>(p, "sequence_offsets_s", "plan");

    const json& d = field(j, "ddm", "scenario");
    if (d.contains("uniform")) {
        const json& u = d.at("uniform");
        s.ddm = DdmScheme::uniform(get<int>(u, "num_tx", "ddm.uniform"), s.waveform.chirp_repetition_interval_s,
                                   get<double>(u, "tx_spacing_m", "ddm.uniform"));
    } else {
        s.ddm.ddm_freqs_hz = get<std::vector<double>>(d, "ddm_freqs_hz", "ddm");
        s.ddm.tx_positions_m = d.contains("tx_positions_m") ? get<std::vector<double>>(d, "tx_positions_m", "ddm")
                                                             : std::vector<double>(s.ddm.ddm_freqs_hz.size(), 0.0);
    }
    if (s.ddm.tx_positions_m.size() != s.ddm.ddm_freqs_hz.size()) {
        throw InvalidArgument("ddm: tx_positions_m and ddm_freqs_hz differ in length");
    }

    s.num_rx = j.contains("num_rx") ? get<int>(j, "num_rx", "scenario") : 1;
    s.noise_variance = j.contains("noise_variance") ? get<double>(j, "noise_variance", "scenario") : 0.0;
    return s;
}

json targets_to_json(const TargetSet& t) {
    json arr = json::array();
    for (const auto& x : t.targets) {
        arr.push_back({{"range_m", x.range_m},
                       {"velocity_mps", x.velocity_mps},
                       {"dod_angle_rad", x.dod_angle_rad},
                       {"amplitude", {x.amplitude.real(), x.amplitude.imag()}}});
    }
    return {{"targets", arr}};
}

TargetSet targets_from_json(const json& j) {
    TargetSet out;
    const json& arr = field(j, "targets", "target file");
    if (!arr.is_array()) throw InvalidArgument("target file: 'targets' must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const json& e = arr[i];
        const std::string where = "targets[" + std::to_string(i) + "]";
        Target t;
        t.range_m = get<double>(e, "range_m", where);
        if (e.contains("velocity_kmh")) {
            t.velocity_mps = kmh_to_mps(get<double>(e, "velocity_kmh", where));
        } else {
            t.velocity_mps = get<double>(e, "velocity_mps", where);
        }
        if (e.contains("dod_angle_deg")) {
            t.dod_angle_rad = get<double>(e, "dod_angle_deg", where) * std::numbers::pi / 180.0;
        } else if (e.contains("dod_angle_rad")) {
            t.dod_angle_rad = get<double>(e, "dod_angle_rad", where);
        }
        if (e.contains("amplitude")) {
            const auto a = get<std::vector<double>>(e, "amplitude", where);
            if (a.size() != 2) throw InvalidArgument(where + ".amplitude: expected [re, im]");
            t.amplitude = {a[0], a[1]};
        }
        out.targets.push_back(t);
    }
    return out;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

RadarScenario load_scenario(const std::filesystem::path& path) {
    try {
        return scenario_from_json(read_json_file(path));
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

TargetSet load_targets(const std::filesystem::path& path) {
    try {
        return targets_from_json(read_json_file(path));
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

} // namespace chirpjoint
