#include "maskplan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "maskplan/errors.hpp"
#include "maskplan/rng.hpp"

namespace maskplan {

namespace {

constexpr char kMagic[8] = {'M', 'P', 'C', 'K', 'P', 'T', '1', '\n'};

void write_doubles(std::ofstream& out, const double* data, size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* data, size_t n) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw IoError("checkpoint: truncated payload");
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);

    Vec flat = ckpt.params.pack();
    nlohmann::json header = {
        {"format_version", 1},
        {"config", ckpt.config.to_json()},
        {"vocab", ckpt.vocab.to_json()},
        {"param_count", static_cast<int64_t>(flat.size())},
        {"has_opt", ckpt.has_opt},
        {"adam_t", ckpt.adam_t},
        {"step", ckpt.step},
        {"params_version", ckpt.params.version},
        {"params_hash", fnv1a(flat.data(), static_cast<size_t>(flat.size()) * sizeof(double))},
        {"meta", ckpt.meta}};
    std::string hs = header.dump();
    uint64_t hlen = hs.size();

    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    write_doubles(out, flat.data(), flat.size());
    if (ckpt.has_opt) {
        if (ckpt.adam_m.size() != flat.size() || ckpt.adam_v.size() != flat.size())
            throw ContractError("checkpoint: optimizer state size mismatch");
        write_doubles(out, ckpt.adam_m.data(), ckpt.adam_m.size());
        write_doubles(out, ckpt.adam_v.data(), ckpt.adam_v.size());
    }
    if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("checkpoint: bad magic (not a checkpoint file?)");
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in || hlen > (1ull << 24)) throw IoError("checkpoint: bad header length");
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("checkpoint: truncated header");
    nlohmann::json header = nlohmann::json::parse(hs);

    Checkpoint ckpt;
    ckpt.config = ModelConfig::from_json(header.at("config"));
    ckpt.vocab = Vocabulary::from_json(header.at("vocab"));
    ckpt.has_opt = header.at("has_opt").get<bool>();
    ckpt.adam_t = header.at("adam_t").get<int64_t>();
    ckpt.step = header.at("step").get<int64_t>();
    ckpt.meta = header.value("meta", nlohmann::json::object());

    Rng dummy(0);
    ckpt.params = Params::init(ckpt.config, dummy, 0.0);
    int64_t n = header.at("param_count").get<int64_t>();
    if (n != ckpt.params.param_count())
        throw IoError("checkpoint: parameter count does not match config");
    Vec flat(n);
    read_doubles(in, flat.data(), static_cast<size_t>(n));
    uint64_t want = header.at("params_hash").get<uint64_t>();
    uint64_t got = fnv1a(flat.data(), static_cast<size_t>(n) * sizeof(double));
    if (want != got) throw IoError("checkpoint: parameter payload hash mismatch");
    ckpt.params.unpack(flat);
    ckpt.params.version = header.at("params_version").get<uint64_t>();
    if (ckpt.has_opt) {
        ckpt.adam_m.resize(n);
        ckpt.adam_v.resize(n);
        read_doubles(in, ckpt.adam_m.data(), static_cast<size_t>(n));
        read_doubles(in, ckpt.adam_v.data(), static_cast<size_t>(n));
    }
    return ckpt;
}

uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash missing file: " + path);
    uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
    }
    return h;
}

uint64_t json_hash(const nlohmann::json& j) { return fnv1a_str(j.dump()); }

}  // namespace maskplan
