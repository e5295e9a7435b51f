#include "mixtg/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mixtg/errors.hpp"

namespace mixtg {

EmbeddingMode parse_embedding_mode(const std::string& name) {
    if (name == "spatial") return EmbeddingMode::Spatial;
    if (name == "temporal") return EmbeddingMode::Temporal;
    if (name == "both") return EmbeddingMode::Both;
    throw ConfigError("unknown embedding_mode '" + name + "' (expected spatial|temporal|both)");
}

LossReduction parse_loss_reduction(const std::string& name) {
    if (name == "mean") return LossReduction::Mean;
    if (name == "sum") return LossReduction::Sum;
    throw ConfigError("unknown loss_reduction '" + name + "' (expected mean|sum)");
}

std::string embedding_mode_name(EmbeddingMode v) {
    switch (v) {
        case EmbeddingMode::Spatial: return "spatial";
        case EmbeddingMode::Temporal: return "temporal";
        case EmbeddingMode::Both: return "both";
    }
    throw ConfigError("invalid embedding_mode value");
}

std::string loss_reduction_name(LossReduction v) {
    return v == LossReduction::Mean ? "mean" : "sum";
}

void ModelConfig::validate() const {
    if (frames < 1) throw ConfigError("config: frames must be >= 1");
    if (joints < 1) throw ConfigError("config: joints must be >= 1");
    if (layers < 1) throw ConfigError("config: layers must be >= 1");
    if (motion_dim < 1) throw ConfigError("config: motion_dim must be >= 1");
    if (heads < 1 || embed_dim % heads != 0) {
        throw ConfigError("config: heads must divide embed_dim");
    }
    if (se_reduction < 1 || embed_dim % se_reduction != 0) {
        throw ConfigError("config: se_reduction must divide embed_dim");
    }
    if (temporal_neighbors < 1 || temporal_neighbors > frames) {
        throw ConfigError("config: temporal_neighbors must be in [1, frames]");
    }
    if (mlp_ratio < 1) throw ConfigError("config: mlp_ratio must be >= 1");
    if (layer_norm_eps <= 0) throw ConfigError("config: layer_norm_eps must be positive");
    if (lambda_delta < 0) throw ConfigError("config: lambda_delta must be >= 0");
    if (learning_rate <= 0) throw ConfigError("config: learning_rate must be positive");
    if (weight_decay < 0) throw ConfigError("config: weight_decay must be >= 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
        throw ConfigError("config: betas must lie in [0, 1)");
    }
    if (adam_eps <= 0) throw ConfigError("config: adam_eps must be positive");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (image_width <= 0 || image_height <= 0) {
        throw ConfigError("config: image size must be positive");
    }
    if (output_scale <= 0) throw ConfigError("config: output_scale must be positive");
    parse_act(gcn_activation);
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value '" + v + "' for key '" + key + "'");
    }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value '" + v + "' for key '" + key + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config: bad boolean value '" + v + "' for key '" + key + "'");
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

std::string ModelConfig::to_kv_text() const {
    std::ostringstream os;
    os << "frames = " << frames << "\n";
    os << "joints = " << joints << "\n";
    os << "embed_dim = " << embed_dim << "\n";
    os << "motion_dim = " << motion_dim << "\n";
    os << "layers = " << layers << "\n";
    os << "heads = " << heads << "\n";
    os << "temporal_neighbors = " << temporal_neighbors << "\n";
    os << "mlp_ratio = " << mlp_ratio << "\n";
    os << "se_reduction = " << se_reduction << "\n";
    os << "embedding_mode = " << embedding_mode_name(embedding_mode) << "\n";
    os << "branch_composition = " << branch_composition_name(branch_composition) << "\n";
    os << "stream_order = " << stream_order_name(stream_order) << "\n";
    os << "se_position = " << se_position_name(se_position) << "\n";
    os << "gcn_activation = " << gcn_activation << "\n";
    os << "layer_norm_eps = " << fmt_double(layer_norm_eps) << "\n";
    os << "lambda_delta = " << fmt_double(lambda_delta) << "\n";
    os << "loss_reduction = " << loss_reduction_name(loss_reduction) << "\n";
    os << "learning_rate = " << fmt_double(learning_rate) << "\n";
    os << "weight_decay = " << fmt_double(weight_decay) << "\n";
    os << "beta1 = " << fmt_double(beta1) << "\n";
    os << "beta2 = " << fmt_double(beta2) << "\n";
    os << "adam_eps = " << fmt_double(adam_eps) << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "augment_flip = " << (augment_flip ? "true" : "false") << "\n";
    os << "image_width = " << fmt_double(image_width) << "\n";
    os << "image_height = " << fmt_double(image_height) << "\n";
    os << "output_scale = " << fmt_double(output_scale) << "\n";
    os << "seed = " << seed << "\n";
    return os.str();
}

ModelConfig ModelConfig::from_kv_text(const std::string& text) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(line_no) +
                              " is not 'key = value': '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "frames") c.frames = parse_int(key, value);
        else if (key == "joints") c.joints = parse_int(key, value);
        else if (key == "embed_dim") c.embed_dim = parse_int(key, value);
        else if (key == "motion_dim") c.motion_dim = parse_int(key, value);
        else if (key == "layers") c.layers = parse_int(key, value);
        else if (key == "heads") c.heads = parse_int(key, value);
        else if (key == "temporal_neighbors") c.temporal_neighbors = parse_int(key, value);
        else if (key == "mlp_ratio") c.mlp_ratio = parse_int(key, value);
        else if (key == "se_reduction") c.se_reduction = parse_int(key, value);
        else if (key == "embedding_mode") c.embedding_mode = parse_embedding_mode(value);
        else if (key == "branch_composition") c.branch_composition = parse_branch_composition(value);
        else if (key == "stream_order") c.stream_order = parse_stream_order(value);
        else if (key == "se_position") c.se_position = parse_se_position(value);
        else if (key == "gcn_activation") { parse_act(value); c.gcn_activation = value; }
        else if (key == "layer_norm_eps") c.layer_norm_eps = parse_double(key, value);
        else if (key == "lambda_delta") c.lambda_delta = parse_double(key, value);
        else if (key == "loss_reduction") c.loss_reduction = parse_loss_reduction(value);
        else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
        else if (key == "weight_decay") c.weight_decay = parse_double(key, value);
        else if (key == "beta1") c.beta1 = parse_double(key, value);
        else if (key == "beta2") c.beta2 = parse_double(key, value);
        else if (key == "adam_eps") c.adam_eps = parse_double(key, value);
        else if (key == "batch_size") c.batch_size = parse_int(key, value);
        else if (key == "augment_flip") c.augment_flip = parse_bool(key, value);
        else if (key == "image_width") c.image_width = parse_double(key, value);
        else if (key == "image_height") c.image_height = parse_double(key, value);
        else if (key == "output_scale") c.output_scale = parse_double(key, value);
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
        else throw ConfigError("config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return from_kv_text(os.str());
}

void ModelConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("config: cannot write '" + path + "'");
    out << to_kv_text();
}

ModelConfig ModelConfig::toy_default() { return {}; }

ModelConfig ModelConfig::paper_shape() {
    ModelConfig c;
    c.frames = 243;
    c.joints = 17;
    c.embed_dim = 128;
    c.motion_dim = 512;
    c.layers = 16;
    c.heads = 8;
    return c;
}

ModelConfig ModelConfig::gradcheck_tiny() {
    ModelConfig c;
    c.frames = 4;
    c.joints = 5;
    c.embed_dim = 8;
    c.motion_dim = 4;
    c.layers = 1;
    c.heads = 2;
    c.temporal_neighbors = 2;
    c.mlp_ratio = 2;
    c.se_reduction = 4;
    return c;
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.to_kv_text() == b.to_kv_text();
}

}  // namespace mixtg
