// SPDX-License-Identifier: Apache-2.0
#include "domaingame/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace domaingame::inline DOMAINGAME_ABI {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'D', 'G', 'C', 'K'};

template <class T>
void put(std::ostream& os, const T& v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const fs::path& file)
{
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw CheckpointError("truncated checkpoint " + file.string());
    return v;
}

void put_string(std::ostream& os, const std::string& s)
{
    put<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const fs::path& file)
{
    const auto n = get<std::uint64_t>(is, file);
    if (n > (std::uint64_t{1} << 32)) throw CheckpointError("corrupt string in checkpoint " + file.string());
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw CheckpointError("truncated checkpoint " + file.string());
    return s;
}

// values are stored in the writer's precision; the reader converts
void put_set(std::ostream& os, const nn::ParamSet& s)
{
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
        put_string(os, s.names[i]);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(s[i].rank()));
        for (int d : s[i].shape()) put<std::int32_t>(os, d);
        os.write(reinterpret_cast<const char*>(s[i].data()), static_cast<std::streamsize>(s[i].size() * sizeof(Real)));
    }
}

void get_set_into(std::istream& is, nn::ParamSet& s, std::uint8_t value_bytes, const fs::path& file, const char* what)
{
    const auto count = get<std::uint32_t>(is, file);
    if (count != s.size()) {
        throw CheckpointError(std::string(what) + ": checkpoint holds " + std::to_string(count) + " tensors, model has " +
                              std::to_string(s.size()));
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto name = get_string(is, file);
        if (name != s.names[i]) {
            throw CheckpointError(std::string(what) + ": tensor '" + name + "' where '" + s.names[i] + "' was expected");
        }
        const auto rank = get<std::uint32_t>(is, file);
        std::vector<int> shape(rank);
        for (auto& d : shape) d = get<std::int32_t>(is, file);
        if (shape != s[i].shape()) {
            throw CheckpointError(std::string(what) + ": tensor '" + name + "' has shape " + shape_string(shape) +
                                  ", model expects " + shape_string(s[i].shape()));
        }
        Tensor& t = s[i];
        if (value_bytes == sizeof(Real)) {
            is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(Real)));
        } else if (value_bytes == 4) {
            for (auto& v : t.values()) v = static_cast<Real>(get<float>(is, file));
        } else {
            for (auto& v : t.values()) v = static_cast<Real>(get<double>(is, file));
        }
        if (!is) throw CheckpointError("truncated checkpoint " + file.string());
    }
}

} // namespace

void save_checkpoint(const fs::path& file, const GameState& state, const nlohmann::json& meta)
{
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    // write-then-rename so a crash never leaves a half-written checkpoint behind
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw CheckpointError("cannot write checkpoint " + file.string());
        os.write(kMagic, sizeof kMagic);
        put<std::uint32_t>(os, kCheckpointFormatVersion);
        put<std::uint8_t>(os, static_cast<std::uint8_t>(sizeof(Real)));
        put_string(os, nlohmann::json(state.nets.config).dump());
        put<std::uint64_t>(os, state.t);
        put<std::int32_t>(os, state.epoch);
        put_string(os, state.rng.save_state());
        put_string(os, meta.is_null() ? std::string("{}") : meta.dump());
        for (int p = 0; p < 4; ++p) put_set(os, state.params(Player(p)));
        for (const auto& mo : state.optimizer) {
            put_set(os, mo.m);
            put_set(os, mo.v);
        }
        if (!os) throw CheckpointError("failed writing checkpoint " + file.string());
    }
    fs::rename(tmp, file);
}

LoadedCheckpoint load_checkpoint(const fs::path& file)
{
    std::ifstream is(file, std::ios::binary);
    if (!is) throw CheckpointError("missing checkpoint " + file.string());
    char magic[4];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw CheckpointError("not a checkpoint: " + file.string());
    const auto version = get<std::uint32_t>(is, file);
    if (version != kCheckpointFormatVersion) {
        throw CheckpointError("unsupported checkpoint format version " + std::to_string(version) + " in " +
                              file.string());
    }
    const auto value_bytes = get<std::uint8_t>(is, file);
    if (value_bytes != 4 && value_bytes != 8) throw CheckpointError("corrupt precision tag in " + file.string());

    LoadedCheckpoint out;
    const auto cfg = nlohmann::json::parse(get_string(is, file)).get<NetConfig>();
    GameState& s = out.state;
    s.nets = Networks(cfg, 0);
    s.t = get<std::uint64_t>(is, file);
    s.epoch = get<std::int32_t>(is, file);
    s.rng.load_state(get_string(is, file));
    out.meta = nlohmann::json::parse(get_string(is, file));
    static const char* names[4] = {"anatomy encoder", "domain encoder", "segmenter", "reconstructor"};
    for (int p = 0; p < 4; ++p) get_set_into(is, s.params(Player(p)), value_bytes, file, names[p]);
    for (int p = 0; p < 4; ++p) {
        auto& mo = s.optimizer[static_cast<std::size_t>(p)];
        mo.m = s.params(Player(p)).zeros_like();
        mo.v = s.params(Player(p)).zeros_like();
        get_set_into(is, mo.m, value_bytes, file, names[p]);
        get_set_into(is, mo.v, value_bytes, file, names[p]);
    }
    return out;
}

fs::path resolve_checkpoint(const fs::path& path)
{
    if (fs::is_directory(path)) {
        const auto inner = path / "state.ckpt";
        if (!fs::exists(inner)) throw CheckpointError("no state.ckpt in " + path.string());
        return inner;
    }
    if (!fs::exists(path)) throw CheckpointError("missing checkpoint " + path.string());
    return path;
}

} // namespace domaingame
