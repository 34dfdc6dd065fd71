#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hope/dataset.hpp"
#include "hope/errors.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "embedding files are little-endian");

namespace hope {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr char kMagic[8] = {'H', 'O', 'P', 'E', 'E', 'M', 'B', '1'};

void write_embeddings(const std::string& path, const std::vector<Sample>& samples, int dim) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t count = static_cast<std::uint32_t>(samples.size());
    const std::uint32_t d = static_cast<std::uint32_t>(dim);
    out.write(reinterpret_cast<const char*>(&count), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    std::vector<float> buf(static_cast<std::size_t>(dim));
    for (const Sample& s : samples) {
        const std::uint16_t a = static_cast<std::uint16_t>(s.label.attr);
        const std::uint16_t o = static_cast<std::uint16_t>(s.label.obj);
        out.write(reinterpret_cast<const char*>(&a), 2);
        out.write(reinterpret_cast<const char*>(&o), 2);
        for (int j = 0; j < dim; ++j) buf[static_cast<std::size_t>(j)] = static_cast<float>(s.embedding(0, j));
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    }
    if (!out) throw FormatError("short write to " + path);
}

std::vector<Sample> read_embeddings(const std::string& path, int expect_dim, std::size_t expect_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open embedding file " + path);
    char magic[8] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError(path + ": bad magic, expected HOPEEMB1");
    }
    std::uint32_t count = 0, d = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    in.read(reinterpret_cast<char*>(&d), 4);
    if (!in) throw FormatError(path + ": truncated header");
    if (static_cast<int>(d) != expect_dim) {
        throw FormatError(path + ": dimension " + std::to_string(d) + " does not match manifest dimension " +
                          std::to_string(expect_dim));
    }
    if (count != expect_count) {
        throw FormatError(path + ": record count " + std::to_string(count) + " does not match manifest count " +
                          std::to_string(expect_count));
    }
    std::vector<Sample> samples;
    samples.reserve(count);
    std::vector<float> buf(static_cast<std::size_t>(d));
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint16_t a = 0, o = 0;
        in.read(reinterpret_cast<char*>(&a), 2);
        in.read(reinterpret_cast<char*>(&o), 2);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
        if (!in) throw FormatError(path + ": truncated at record " + std::to_string(i));
        Sample s;
        s.label = {static_cast<int>(a), static_cast<int>(o)};
        s.embedding = Matrix(1, static_cast<int>(d));
        for (std::uint32_t j = 0; j < d; ++j) s.embedding(0, static_cast<int>(j)) = static_cast<double>(buf[j]);
        if (!s.embedding.is_finite()) throw FormatError(path + ": non-finite embedding at record " + std::to_string(i));
        samples.push_back(std::move(s));
    }
    char extra = 0;
    if (in.read(&extra, 1)) throw FormatError(path + ": trailing bytes after last record");
    return samples;
}

json pairs_to_json(const std::vector<Composition>& pairs) {
    json arr = json::array();
    for (Composition c : pairs) arr.push_back(json::array({c.attr, c.obj}));
    return arr;
}

std::vector<Composition> pairs_from_json(const json& arr, const std::string& what) {
    if (!arr.is_array()) throw FormatError("manifest: " + what + " must be an array");
    std::vector<Composition> out;
    for (const json& p : arr) {
        if (!p.is_array() || p.size() != 2) throw FormatError("manifest: malformed pair in " + what);
        out.push_back({p[0].get<int>(), p[1].get<int>()});
    }
    return out;
}

json groups_to_json(const std::vector<std::vector<int>>& groups) {
    json arr = json::array();
    for (const auto& g : groups) arr.push_back(g);
    return arr;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& rows, int expect_cols, const std::string& what) {
    if (!rows.is_array() || rows.empty()) return Matrix();
    Matrix m(static_cast<int>(rows.size()), expect_cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].is_array() || static_cast<int>(rows[i].size()) != expect_cols) {
            throw FormatError("manifest: malformed row in " + what);
        }
        for (int j = 0; j < expect_cols; ++j) m(static_cast<int>(i), j) = rows[i][static_cast<std::size_t>(j)].get<double>();
    }
    if (!m.is_finite()) throw FormatError("manifest: non-finite values in " + what);
    return m;
}

}  // namespace

void save_dataset(const CompositionDataset& ds, const std::string& dir) {
    ds.validate();
    if (ds.vocab.num_attributes() > 65535 || ds.vocab.num_objects() > 65535) {
        throw FormatError("save_dataset: primitive ids exceed u16 range");
    }
    fs::create_directories(dir);
    write_embeddings((fs::path(dir) / "train.embs").string(), ds.train, ds.vocab.dimension);
    write_embeddings((fs::path(dir) / "test.embs").string(), ds.test, ds.vocab.dimension);

    json manifest;
    manifest["format"] = "hope-dataset-v1";
    manifest["dimension"] = ds.vocab.dimension;
    manifest["attributes"] = ds.vocab.attributes;
    manifest["objects"] = ds.vocab.objects;
    manifest["seen_pairs"] = pairs_to_json(ds.vocab.seen_pairs);
    manifest["unseen_closed"] = pairs_to_json(ds.vocab.unseen_closed);
    manifest["synonym_groups"] = {{"attributes", groups_to_json(ds.synonyms.attributes)},
                                  {"objects", groups_to_json(ds.synonyms.objects)}};
    manifest["counts"] = {{"train", ds.train.size()}, {"test", ds.test.size()}};
    if (ds.has_latents()) {
        manifest["attr_latents"] = matrix_to_json(ds.attr_latents);
        manifest["obj_latents"] = matrix_to_json(ds.obj_latents);
    }
    manifest["files"] = {{"train", "train.embs"}, {"test", "test.embs"}};
    manifest["seed"] = ds.seed;

    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw FormatError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

CompositionDataset load_dataset(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw FormatError("cannot open " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("manifest: invalid JSON: " + std::string(e.what()));
    }
    try {
        if (manifest.value("format", "") != "hope-dataset-v1") {
            throw FormatError("manifest: unknown format tag");
        }
        CompositionDataset ds;
        ds.vocab.dimension = manifest.at("dimension").get<int>();
        ds.vocab.attributes = manifest.at("attributes").get<std::vector<std::string>>();
        ds.vocab.objects = manifest.at("objects").get<std::vector<std::string>>();
        ds.vocab.seen_pairs = pairs_from_json(manifest.at("seen_pairs"), "seen_pairs");
        ds.vocab.unseen_closed = pairs_from_json(manifest.at("unseen_closed"), "unseen_closed");
        if (manifest.contains("synonym_groups")) {
            ds.synonyms.attributes = manifest["synonym_groups"].value("attributes", std::vector<std::vector<int>>{});
            ds.synonyms.objects = manifest["synonym_groups"].value("objects", std::vector<std::vector<int>>{});
        }
        ds.seed = manifest.value("seed", 0ULL);
        if (manifest.contains("attr_latents")) {
            ds.attr_latents = matrix_from_json(manifest["attr_latents"], ds.vocab.dimension, "attr_latents");
            ds.obj_latents = matrix_from_json(manifest["obj_latents"], ds.vocab.dimension, "obj_latents");
        }

        const std::string train_file = manifest.at("files").at("train").get<std::string>();
        const std::string test_file = manifest.at("files").at("test").get<std::string>();
        const std::size_t train_count = manifest.at("counts").at("train").get<std::size_t>();
        const std::size_t test_count = manifest.at("counts").at("test").get<std::size_t>();
        ds.train = read_embeddings((fs::path(dir) / train_file).string(), ds.vocab.dimension, train_count);
        ds.test = read_embeddings((fs::path(dir) / test_file).string(), ds.vocab.dimension, test_count);

        try {
            ds.validate();
        } catch (const ConfigError& e) {
            throw FormatError(std::string("dataset validation failed: ") + e.what());
        }
        return ds;
    } catch (const json::exception& e) {
        throw FormatError("manifest: " + std::string(e.what()));
    }
}

}  // namespace hope
