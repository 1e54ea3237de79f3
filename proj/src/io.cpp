#include "actmark/io.hpp"

#include <unistd.h>

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "actmark/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian");

namespace actmark::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::uint8_t b : bytes) c = table[(c ^ b) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

namespace {

constexpr const char* kMagic = "actmark-container";
constexpr int kVersion = 1;

struct Section {
    std::string name;
    std::string dtype;  // f32 | i32 | u8
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> bytes;
};

struct Container {
    std::string kind;
    nlohmann::json meta;
    std::vector<Section> sections;
};

Section make_section(std::string name, const Matrix& m) {
    Section s;
    s.name = std::move(name);
    s.dtype = "f32";
    s.rows = m.rows;
    s.cols = m.cols;
    s.bytes.resize(m.values.size() * sizeof(float));
    std::memcpy(s.bytes.data(), m.values.data(), s.bytes.size());
    return s;
}

Section make_section(std::string name, std::span<const float> v) {
    Section s;
    s.name = std::move(name);
    s.dtype = "f32";
    s.rows = 1;
    s.cols = v.size();
    s.bytes.resize(v.size() * sizeof(float));
    std::memcpy(s.bytes.data(), v.data(), s.bytes.size());
    return s;
}

Section make_section(std::string name, std::span<const std::int32_t> v) {
    Section s;
    s.name = std::move(name);
    s.dtype = "i32";
    s.rows = 1;
    s.cols = v.size();
    s.bytes.resize(v.size() * sizeof(std::int32_t));
    std::memcpy(s.bytes.data(), v.data(), s.bytes.size());
    return s;
}

Section make_section(std::string name, const whitebox::Bits& b) {
    Section s;
    s.name = std::move(name);
    s.dtype = "u8";
    s.rows = b.rows;
    s.cols = b.cols;
    s.bytes.assign(b.values.begin(), b.values.end());
    return s;
}

std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "f32" || dtype == "i32") return 4;
    if (dtype == "u8") return 1;
    fail(ErrorCode::Format, "unknown section dtype '" + dtype + "'");
}

void save_container(const std::string& path, const Container& c) {
    nlohmann::json manifest;
    manifest["kind"] = c.kind;
    manifest["version"] = kVersion;
    manifest["meta"] = c.meta;
    auto& sections = manifest["sections"];
    sections = nlohmann::json::array();
    std::size_t offset = 0;
    for (const Section& s : c.sections) {
        nlohmann::json e;
        e["name"] = s.name;
        e["dtype"] = s.dtype;
        e["rows"] = s.rows;
        e["cols"] = s.cols;
        e["offset"] = offset;
        e["bytes"] = s.bytes.size();
        e["crc32"] = crc32(s.bytes);
        sections.push_back(std::move(e));
        offset += s.bytes.size();
    }

    const std::string tmp = path + ".tmp." + std::to_string(getpid());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) fail(ErrorCode::Input, "cannot write " + tmp);
        f << kMagic << ' ' << kVersion << '\n';
        f << manifest.dump() << '\n';
        for (const Section& s : c.sections) {
            f.write(reinterpret_cast<const char*>(s.bytes.data()),
                    static_cast<std::streamsize>(s.bytes.size()));
        }
        if (!f) fail(ErrorCode::Input, "write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        fail(ErrorCode::Input, "cannot move " + tmp + " into place");
    }
}

Container load_container(const std::string& path, const std::string& expected_kind) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::Input, "cannot open " + path);

    std::string header;
    std::getline(f, header);
    std::istringstream hs(header);
    std::string magic;
    int version = -1;
    hs >> magic >> version;
    if (magic != kMagic) fail(ErrorCode::Format, path + ": not a container file");
    if (version != kVersion) {
        fail(ErrorCode::UnsupportedVersion,
             path + ": container version " + std::to_string(version) +
                 ", expected " + std::to_string(kVersion));
    }

    std::string manifest_line;
    std::getline(f, manifest_line);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_line);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, path + ": bad manifest: " + e.what());
    }
    if (manifest.value("version", -1) != kVersion) {
        fail(ErrorCode::UnsupportedVersion, path + ": manifest version mismatch");
    }

    Container c;
    c.kind = manifest.value("kind", "");
    if (c.kind != expected_kind) {
        fail(ErrorCode::Format, path + ": holds a '" + c.kind + "', expected '" +
                                    expected_kind + "'");
    }
    c.meta = manifest.value("meta", nlohmann::json::object());

    const std::streampos data_start = f.tellg();
    for (const auto& e : manifest["sections"]) {
        Section s;
        s.name = e.at("name").get<std::string>();
        s.dtype = e.at("dtype").get<std::string>();
        s.rows = e.at("rows").get<std::size_t>();
        s.cols = e.at("cols").get<std::size_t>();
        const auto offset = e.at("offset").get<std::size_t>();
        const auto nbytes = e.at("bytes").get<std::size_t>();
        if (nbytes != s.rows * s.cols * dtype_size(s.dtype)) {
            fail(ErrorCode::Format, path + ": section " + s.name + " size mismatch");
        }
        s.bytes.resize(nbytes);
        f.seekg(data_start + static_cast<std::streamoff>(offset));
        f.read(reinterpret_cast<char*>(s.bytes.data()),
               static_cast<std::streamsize>(nbytes));
        if (static_cast<std::size_t>(f.gcount()) != nbytes) {
            fail(ErrorCode::Format, path + ": truncated section " + s.name);
        }
        const auto want = e.at("crc32").get<std::uint32_t>();
        const auto got = crc32(s.bytes);
        if (want != got) {
            fail(ErrorCode::Corruption, path + ": checksum mismatch in section " +
                                            s.name);
        }
        c.sections.push_back(std::move(s));
    }
    return c;
}

const Section& find_section(const Container& c, const std::string& name,
                            const std::string& path) {
    for (const Section& s : c.sections) {
        if (s.name == name) return s;
    }
    fail(ErrorCode::Format, path + ": missing section " + name);
}

Matrix to_matrix(const Section& s) {
    Matrix m(s.rows, s.cols);
    std::memcpy(m.values.data(), s.bytes.data(), s.bytes.size());
    return m;
}

std::vector<float> to_floats(const Section& s) {
    std::vector<float> v(s.rows * s.cols);
    std::memcpy(v.data(), s.bytes.data(), s.bytes.size());
    return v;
}

std::vector<std::int32_t> to_ints(const Section& s) {
    std::vector<std::int32_t> v(s.rows * s.cols);
    std::memcpy(v.data(), s.bytes.data(), s.bytes.size());
    return v;
}

}  // namespace

void save_model(const std::string& path, const nn::MlpModel& model) {
    Container c;
    c.kind = "model";
    c.meta["layer_dims"] = model.layer_dims;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        if (!all_finite(model.weights[l])) {
            fail(ErrorCode::Numeric, "model has non-finite weights at layer " +
                                         std::to_string(l));
        }
        c.sections.push_back(make_section("weights" + std::to_string(l), model.weights[l]));
        c.sections.push_back(make_section("biases" + std::to_string(l),
                                          std::span<const float>(model.biases[l])));
    }
    save_container(path, c);
}

nn::MlpModel load_model(const std::string& path) {
    const Container c = load_container(path, "model");
    nn::MlpModel m = nn::MlpModel::zeros(c.meta.at("layer_dims").get<std::vector<std::size_t>>());
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        const Matrix w = to_matrix(find_section(c, "weights" + std::to_string(l), path));
        if (!w.same_shape(m.weights[l])) {
            fail(ErrorCode::Format, path + ": weights" + std::to_string(l) +
                                        " shape mismatch");
        }
        m.weights[l] = w;
        const auto b = to_floats(find_section(c, "biases" + std::to_string(l), path));
        if (b.size() != m.biases[l].size()) {
            fail(ErrorCode::Format, path + ": biases" + std::to_string(l) +
                                        " length mismatch");
        }
        m.biases[l] = b;
    }
    return m;
}

void save_secret(const std::string& path, const whitebox::WhiteboxSecret& secret) {
    Container c;
    c.kind = "secret";
    c.meta["layer_index"] = secret.layer_index;
    c.meta["lambda1"] = secret.lambda1;
    c.meta["lambda2"] = secret.lambda2;
    c.meta["wm_length"] = secret.wm_length;
    c.meta["seed"] = secret.seed;
    c.sections.push_back(make_section(
        "carrier_classes", std::span<const std::int32_t>(secret.carrier_classes)));
    c.sections.push_back(make_section("projection", secret.projection));
    c.sections.push_back(make_section("bits", secret.bits));
    save_container(path, c);
}

whitebox::WhiteboxSecret load_secret(const std::string& path) {
    const Container c = load_container(path, "secret");
    whitebox::WhiteboxSecret s;
    s.layer_index = c.meta.at("layer_index").get<std::size_t>();
    s.lambda1 = c.meta.at("lambda1").get<float>();
    s.lambda2 = c.meta.at("lambda2").get<float>();
    s.wm_length = c.meta.at("wm_length").get<std::size_t>();
    s.seed = c.meta.at("seed").get<std::uint64_t>();
    s.carrier_classes = to_ints(find_section(c, "carrier_classes", path));
    s.projection = to_matrix(find_section(c, "projection", path));
    const Section& bits = find_section(c, "bits", path);
    s.bits = whitebox::Bits(bits.rows, bits.cols);
    s.bits.values.assign(bits.bytes.begin(), bits.bytes.end());
    if (s.bits.rows != s.carrier_classes.size() || s.bits.cols != s.wm_length ||
        s.projection.cols != s.wm_length) {
        fail(ErrorCode::Format, path + ": secret sections are inconsistent");
    }
    return s;
}

void save_centers(const std::string& path, const whitebox::GaussianCenters& centers) {
    Container c;
    c.kind = "centers";
    c.sections.push_back(make_section("mu", centers.mu));
    save_container(path, c);
}

whitebox::GaussianCenters load_centers(const std::string& path) {
    const Container c = load_container(path, "centers");
    whitebox::GaussianCenters g;
    g.mu = to_matrix(find_section(c, "mu", path));
    return g;
}

void save_keyset(const std::string& path, const blackbox::BlackboxKeySet& keyset) {
    Container c;
    c.kind = "keyset";
    c.meta["initial_count"] = keyset.initial_count;
    c.meta["seed"] = keyset.seed;
    c.sections.push_back(make_section("inputs", keyset.inputs));
    c.sections.push_back(
        make_section("labels", std::span<const std::int32_t>(keyset.labels)));
    save_container(path, c);
}

blackbox::BlackboxKeySet load_keyset(const std::string& path) {
    const Container c = load_container(path, "keyset");
    blackbox::BlackboxKeySet k;
    k.initial_count = c.meta.at("initial_count").get<std::size_t>();
    k.seed = c.meta.at("seed").get<std::uint64_t>();
    k.inputs = to_matrix(find_section(c, "inputs", path));
    k.labels = to_ints(find_section(c, "labels", path));
    if (k.labels.size() != k.inputs.rows || k.inputs.rows > k.initial_count) {
        fail(ErrorCode::Format, path + ": keyset sections are inconsistent");
    }
    return k;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(ErrorCode::Input, "cannot write " + path);
    const auto put = [&f](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) f << ',';
            f << row[i];
        }
        f << '\n';
    };
    put(header);
    for (const auto& row : rows) put(row);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::Input, "cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> row;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                row.push_back(line.substr(start));
                break;
            }
            row.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace actmark::io
