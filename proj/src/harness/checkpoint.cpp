#include "alphabox/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace alphabox::harness {

using nlohmann::json;

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t& pos, int bytes) {
    if (pos + static_cast<std::size_t>(bytes) > in.size()) throw InvalidArgument("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{in[pos + static_cast<std::size_t>(i)]} << (8 * i);
    pos += static_cast<std::size_t>(bytes);
    return v;
}

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_vec(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Doubles go through their bit patterns so the header round-trips exactly.
json bits(const std::vector<double>& v) {
    json a = json::array();
    for (double d : v) a.push_back(std::bit_cast<std::uint64_t>(d));
    return a;
}

std::vector<double> unbits(const json& a) {
    std::vector<double> v;
    for (const auto& e : a) v.push_back(std::bit_cast<double>(e.get<std::uint64_t>()));
    return v;
}

} // namespace

std::vector<std::uint8_t> Checkpoint::serialise() const {
    params.check_matches(arch);
    json h;
    h["widths"] = arch.widths;
    std::vector<std::string> acts;
    for (auto a : arch.activations) acts.push_back(to_string(a));
    h["activations"] = acts;
    h["dropout_rates"] = bits(arch.dropout_rates);
    h["task"] = to_string(task);
    h["tau"] = std::bit_cast<std::uint64_t>(tau);
    h["config_hash"] = config_hash;
    h["epoch"] = epoch;
    h["seed"] = seed;
    h["input_mean"] = bits(to_vec(standardizer.input_mean));
    h["input_std"] = bits(to_vec(standardizer.input_std));
    h["target_mean"] = bits(to_vec(standardizer.target_mean));
    h["target_std"] = bits(to_vec(standardizer.target_std));
    const std::string header = h.dump();

    std::vector<std::uint8_t> out;
    out.push_back(kCheckpointVersion);
    put_le(out, header.size(), 4);
    out.insert(out.end(), header.begin(), header.end());
    const auto flat = params.flatten();
    put_le(out, flat.size(), 8);
    for (double d : flat) put_le(out, std::bit_cast<std::uint64_t>(d), 8);
    return out;
}

Checkpoint Checkpoint::deserialise(const std::vector<std::uint8_t>& in) {
    if (in.empty()) throw InvalidArgument("checkpoint is empty");
    if (in[0] != kCheckpointVersion)
        throw InvalidArgument("unsupported checkpoint version " + std::to_string(in[0]));
    std::size_t pos = 1;
    const auto hlen = static_cast<std::size_t>(get_le(in, pos, 4));
    if (pos + hlen > in.size()) throw InvalidArgument("checkpoint truncated");
    json h;
    try {
        h = json::parse(in.begin() + static_cast<std::ptrdiff_t>(pos),
                        in.begin() + static_cast<std::ptrdiff_t>(pos + hlen));
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("checkpoint header: ") + e.what());
    }
    pos += hlen;

    Checkpoint c;
    try {
        c.arch.widths = h.at("widths").get<std::vector<std::size_t>>();
        for (const auto& a : h.at("activations")) c.arch.activations.push_back(activation_from_string(a));
        c.arch.dropout_rates = unbits(h.at("dropout_rates"));
        c.task = task_from_string(h.at("task").get<std::string>());
        c.tau = std::bit_cast<double>(h.at("tau").get<std::uint64_t>());
        c.config_hash = h.at("config_hash").get<std::uint64_t>();
        c.epoch = h.at("epoch").get<std::uint64_t>();
        c.seed = h.at("seed").get<std::uint64_t>();
        c.standardizer.input_mean = from_vec(unbits(h.at("input_mean")));
        c.standardizer.input_std = from_vec(unbits(h.at("input_std")));
        c.standardizer.target_mean = from_vec(unbits(h.at("target_mean")));
        c.standardizer.target_std = from_vec(unbits(h.at("target_std")));
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("checkpoint header: ") + e.what());
    }
    c.arch.validate();

    const auto count = get_le(in, pos, 8);
    c.params = ParameterSet::zeros(c.arch);
    if (count != c.params.size())
        throw InvalidArgument("checkpoint holds " + std::to_string(count) + " parameters, architecture needs " +
                              std::to_string(c.params.size()));
    std::vector<double> flat(count);
    for (auto& d : flat) d = std::bit_cast<double>(get_le(in, pos, 8));
    if (pos != in.size()) throw InvalidArgument("trailing bytes after checkpoint parameters");
    c.params.assign(flat);
    return c;
}

void Checkpoint::save(const std::string& path) const {
    const auto bytes = serialise();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw RuntimeFailure("write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot open checkpoint " + path);
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    return deserialise(bytes);
}

} // namespace alphabox::harness
