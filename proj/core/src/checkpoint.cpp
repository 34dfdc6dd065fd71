#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hope/errors.hpp"
#include "hope/training.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint files are little-endian");

namespace hope {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr char kMagic[8] = {'H', 'O', 'P', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

json pairs_json(const std::vector<Composition>& pairs) {
    json arr = json::array();
    for (Composition c : pairs) arr.push_back(json::array({c.attr, c.obj}));
    return arr;
}

std::vector<Composition> pairs_from(const json& arr) {
    std::vector<Composition> out;
    for (const json& p : arr) out.push_back({p[0].get<int>(), p[1].get<int>()});
    return out;
}

void write_block(std::ofstream& out, const std::string& name, const Matrix& m) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&name_len), 4);
    out.write(name.data(), name_len);
    const std::uint32_t rows = static_cast<std::uint32_t>(m.rows());
    const std::uint32_t cols = static_cast<std::uint32_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * 8));
}

// Frozen tensors stored alongside the trainable ones so a checkpoint is
// self-contained for evaluation.
void visit_frozen(ModelState& m, const std::function<void(const std::string&, Matrix&)>& fn) {
    fn("frozen.label_attrs", m.labels.attributes);
    fn("frozen.label_objs", m.labels.objects);
    fn("frozen.template_tokens", m.labels.template_tokens);
    fn("frozen.text_attr", m.memory.text_attr);
    fn("frozen.text_obj", m.memory.text_obj);
}

}  // namespace

void save_checkpoint(const ModelState& model, const std::string& path) {
    json header;
    header["config"] = json::parse(train_config_to_json(model.config));
    header["seed"] = model.config.seed;
    header["vocab"] = {{"attributes", model.vocab.attributes},
                       {"objects", model.vocab.objects},
                       {"dimension", model.vocab.dimension},
                       {"seen_pairs", pairs_json(model.vocab.seen_pairs)},
                       {"unseen_closed", pairs_json(model.vocab.unseen_closed)}};
    header["row_class"] = pairs_json(model.memory.row_class);
    const std::string header_text = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw FormatError("cannot open " + tmp + " for writing");
        out.write(kMagic, sizeof(kMagic));
        out.write(reinterpret_cast<const char*>(&kVersion), 4);
        const std::uint64_t hash = train_config_hash(model.config);
        out.write(reinterpret_cast<const char*>(&hash), 8);
        const std::uint32_t header_len = static_cast<std::uint32_t>(header_text.size());
        out.write(reinterpret_cast<const char*>(&header_len), 4);
        out.write(header_text.data(), header_len);

        std::uint32_t n_blocks = 1;  // the encoder projection
        ModelState& mutable_model = const_cast<ModelState&>(model);
        visit_params(mutable_model, [&n_blocks](const std::string&, Matrix&, ParamGroup) { ++n_blocks; });
        visit_frozen(mutable_model, [&n_blocks](const std::string&, Matrix&) { ++n_blocks; });
        out.write(reinterpret_cast<const char*>(&n_blocks), 4);
        visit_params(mutable_model, [&out](const std::string& name, Matrix& m, ParamGroup) { write_block(out, name, m); });
        visit_frozen(mutable_model, [&out](const std::string& name, Matrix& m) { write_block(out, name, m); });
        write_block(out, "frozen.encoder", model.encoder.projection());
        if (!out) throw FormatError("short write to " + tmp);
    }
    fs::rename(tmp, path);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint " + path);
    char magic[8] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError(path + ": bad magic, expected HOPECKPT");
    }
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || version != kVersion) throw FormatError(path + ": unsupported checkpoint version");
    std::uint64_t stored_hash = 0;
    in.read(reinterpret_cast<char*>(&stored_hash), 8);
    std::uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), 4);
    if (!in) throw FormatError(path + ": truncated header");
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), header_len);
    if (!in) throw FormatError(path + ": truncated header JSON");

    ModelState model;
    try {
        const json header = json::parse(header_text);
        model.config = train_config_from_json(header.at("config").dump());
        model.vocab.attributes = header.at("vocab").at("attributes").get<std::vector<std::string>>();
        model.vocab.objects = header.at("vocab").at("objects").get<std::vector<std::string>>();
        model.vocab.dimension = header.at("vocab").at("dimension").get<int>();
        model.vocab.seen_pairs = pairs_from(header.at("vocab").at("seen_pairs"));
        model.vocab.unseen_closed = pairs_from(header.at("vocab").at("unseen_closed"));
        model.memory.row_class = pairs_from(header.at("row_class"));
    } catch (const json::exception& e) {
        throw FormatError(path + ": malformed header: " + e.what());
    }
    if (train_config_hash(model.config) != stored_hash) {
        throw FormatError(path + ": config hash does not match the stored config");
    }

    std::uint32_t n_blocks = 0;
    in.read(reinterpret_cast<char*>(&n_blocks), 4);
    if (!in) throw FormatError(path + ": truncated block table");
    std::map<std::string, Matrix> blocks;
    for (std::uint32_t b = 0; b < n_blocks; ++b) {
        std::uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), 4);
        if (!in || name_len > 4096) throw FormatError(path + ": corrupt block name at block " + std::to_string(b));
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        std::uint32_t rows = 0, cols = 0;
        in.read(reinterpret_cast<char*>(&rows), 4);
        in.read(reinterpret_cast<char*>(&cols), 4);
        if (!in) throw FormatError(path + ": truncated block " + name);
        Matrix m(static_cast<int>(rows), static_cast<int>(cols));
        in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * 8));
        if (!in) throw FormatError(path + ": truncated data in block " + name);
        if (!m.is_finite()) throw FormatError(path + ": non-finite values in block " + name);
        blocks.emplace(std::move(name), std::move(m));
    }

    // Rebuild the structural skeleton from the config, then overwrite every
    // tensor from the stored blocks.
    const int dim = model.vocab.dimension;
    const TrainConfig& cfg = model.config;
    Rng rng(cfg.seed);
    model.prompt.theta = Matrix(3, dim);
    model.labels.attributes = Matrix(model.vocab.num_attributes(), dim);
    model.labels.objects = Matrix(model.vocab.num_objects(), dim);
    model.labels.template_tokens = Matrix(4, dim);
    model.memory.slots = cfg.slots;
    model.memory.visual_attr = Matrix(static_cast<int>(model.memory.row_class.size()), dim);
    model.memory.visual_obj = Matrix(static_cast<int>(model.memory.row_class.size()), dim);
    model.memory.text_attr = Matrix(model.vocab.num_attributes(), dim);
    model.memory.text_obj = Matrix(model.vocab.num_objects(), dim);
    model.memory.projection = Matrix(cfg.slots * dim, dim);
    model.composer = ComposerStack::seeded(dim, cfg.n_blocks, cfg.n_experts, cfg.hidden_mult * dim,
                                           cfg.composer_mode, rng);
    model.logit_scale = Matrix(1, 1);

    auto assign = [&blocks, &path](const std::string& name, Matrix& target) {
        auto it = blocks.find(name);
        if (it == blocks.end()) throw FormatError(path + ": missing parameter block " + name);
        if (!it->second.same_shape(target)) throw FormatError(path + ": block " + name + " has unexpected shape");
        target = it->second;
    };
    visit_params(model, [&assign](const std::string& name, Matrix& m, ParamGroup) { assign(name, m); });
    visit_frozen(model, [&assign](const std::string& name, Matrix& m) { assign(name, m); });
    Matrix encoder_projection(dim, dim);
    assign("frozen.encoder", encoder_projection);
    model.encoder = TextEncoderStub(std::move(encoder_projection));
    return model;
}

}  // namespace hope
