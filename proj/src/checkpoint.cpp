#include "msrgan/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "msrgan/common.hpp"
#include "msrgan/sha256.hpp"

using nlohmann::json;

namespace msrgan {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'R', 'G', 'A', 'N', 'C', 'K'};
constexpr uint32_t kVersion = 1;

std::string build_body(const CheckpointArchive& archive) {
    json header;
    header["version"] = kVersion;
    header["meta"] = archive.meta;
    json tensors = json::array();
    for (const auto& [name, t] : archive.tensors) {
        tensors.push_back(json{{"name", name}, {"shape", t.shape()}});
    }
    header["tensors"] = std::move(tensors);
    const std::string hdr = header.dump();

    std::string body;
    body.reserve(sizeof(kMagic) + 8 + hdr.size());
    body.append(kMagic, sizeof(kMagic));
    uint64_t hdr_len = hdr.size();
    body.append(reinterpret_cast<const char*>(&hdr_len), 8);
    body.append(hdr);
    for (const auto& [name, t] : archive.tensors) {
        body.append(reinterpret_cast<const char*>(t.data()), size_t(t.size()) * sizeof(real));
    }
    return body;
}

} // namespace

const Tensor* CheckpointArchive::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

std::string checkpoint_content_hash(const CheckpointArchive& archive) {
    const std::string body = build_body(archive);
    return sha256_hex(body);
}

void save_checkpoint(const std::string& path, const CheckpointArchive& archive) {
    const std::string body = build_body(archive);
    const std::string digest = sha256_hex(body);

    // Write-temp-then-rename keeps checkpoints atomic.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open for writing: " + tmp);
        f.write(body.data(), std::streamsize(body.size()));
        f.write(digest.data(), std::streamsize(digest.size()));
        if (!f) throw Error("short write: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

CheckpointArchive load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open checkpoint: " + path);
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (raw.size() < sizeof(kMagic) + 8 + 64) throw ParseError("checkpoint too small: " + path);
    if (std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0)
        throw ParseError("bad checkpoint magic: " + path);

    const std::string digest = raw.substr(raw.size() - 64);
    const std::string body = raw.substr(0, raw.size() - 64);
    if (sha256_hex(body) != digest) throw ChecksumMismatch("checkpoint content hash mismatch: " + path);

    uint64_t hdr_len = 0;
    std::memcpy(&hdr_len, body.data() + sizeof(kMagic), 8);
    if (sizeof(kMagic) + 8 + hdr_len > body.size()) throw ParseError("corrupt checkpoint header: " + path);
    const json header = json::parse(body.substr(sizeof(kMagic) + 8, hdr_len));

    CheckpointArchive out;
    if (header.contains("meta")) out.meta = header["meta"].get<std::map<std::string, std::string>>();

    size_t off = sizeof(kMagic) + 8 + hdr_len;
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        const size_t bytes = size_t(t.size()) * sizeof(real);
        if (off + bytes > body.size()) throw ParseError("checkpoint data truncated: " + path);
        std::memcpy(t.data(), body.data() + off, bytes);
        off += bytes;
        out.tensors.emplace_back(name, std::move(t));
    }
    return out;
}

} // namespace msrgan
