#include "hsdnet/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hsdnet {

bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
    return a.conv_widths == b.conv_widths && a.pool_after == b.pool_after && a.classes == b.classes &&
           a.image_channels == b.image_channels && a.image_size == b.image_size &&
           a.affine == b.affine && a.dataset == b.dataset &&
           a.synth_per_class == b.synth_per_class &&
           a.synth_test_per_class == b.synth_test_per_class && a.cifar_train == b.cifar_train &&
           a.cifar_test == b.cifar_test && a.epochs == b.epochs && a.lr == b.lr &&
           a.lr_decay_factor == b.lr_decay_factor && a.lr_decay_every == b.lr_decay_every &&
           a.batch_size == b.batch_size && a.finetune_epochs == b.finetune_epochs &&
           a.clustering_auto == b.clustering_auto && a.clustering_layers == b.clustering_layers &&
           a.trunk_full_width == b.trunk_full_width && a.keep_fraction == b.keep_fraction &&
           a.min_classes == b.min_classes && a.iscv_split == b.iscv_split &&
           a.latency_reps == b.latency_reps && a.seed == b.seed;
}

namespace {

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(std::stoi(trim(item)));
    }
    return out;
}

std::string join(const std::vector<int>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: boolean expected for " + key + ", got '" + v + "'");
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "conv_widths") cfg.conv_widths = parse_int_list(value);
        else if (key == "pool_after") cfg.pool_after = parse_int_list(value);
        else if (key == "classes") cfg.classes = std::stoi(value);
        else if (key == "image_channels") cfg.image_channels = std::stoi(value);
        else if (key == "image_size") cfg.image_size = std::stoi(value);
        else if (key == "affine") cfg.affine = parse_bool(value, key);
        else if (key == "dataset") cfg.dataset = value;
        else if (key == "synth_per_class") cfg.synth_per_class = std::stoi(value);
        else if (key == "synth_test_per_class") cfg.synth_test_per_class = std::stoi(value);
        else if (key == "cifar_train") cfg.cifar_train = value;
        else if (key == "cifar_test") cfg.cifar_test = value;
        else if (key == "epochs") cfg.epochs = std::stoi(value);
        else if (key == "lr") cfg.lr = std::stod(value);
        else if (key == "lr_decay_factor") cfg.lr_decay_factor = std::stod(value);
        else if (key == "lr_decay_every") cfg.lr_decay_every = std::stoi(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "finetune_epochs") cfg.finetune_epochs = std::stoi(value);
        else if (key == "clustering_layers") {
            if (value == "auto") {
                cfg.clustering_auto = true;
                cfg.clustering_layers.clear();
            } else {
                cfg.clustering_auto = false;
                cfg.clustering_layers = parse_int_list(value);
            }
        } else if (key == "trunk_full_width") cfg.trunk_full_width = parse_bool(value, key);
        else if (key == "keep_fraction") cfg.keep_fraction = std::stod(value);
        else if (key == "min_classes") cfg.min_classes = std::stoi(value);
        else if (key == "iscv_split") cfg.iscv_split = value;
        else if (key == "latency_reps") cfg.latency_reps = std::stoi(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": unknown key '" + key + "'");
        }
    }
    return cfg;
}

std::string serialize_config(const PipelineConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "conv_widths = " << join(cfg.conv_widths) << "\n";
    os << "pool_after = " << join(cfg.pool_after) << "\n";
    os << "classes = " << cfg.classes << "\n";
    os << "image_channels = " << cfg.image_channels << "\n";
    os << "image_size = " << cfg.image_size << "\n";
    os << "affine = " << (cfg.affine ? "true" : "false") << "\n";
    os << "dataset = " << cfg.dataset << "\n";
    os << "synth_per_class = " << cfg.synth_per_class << "\n";
    os << "synth_test_per_class = " << cfg.synth_test_per_class << "\n";
    if (!cfg.cifar_train.empty()) os << "cifar_train = " << cfg.cifar_train << "\n";
    if (!cfg.cifar_test.empty()) os << "cifar_test = " << cfg.cifar_test << "\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "lr = " << cfg.lr << "\n";
    os << "lr_decay_factor = " << cfg.lr_decay_factor << "\n";
    os << "lr_decay_every = " << cfg.lr_decay_every << "\n";
    os << "batch_size = " << cfg.batch_size << "\n";
    os << "finetune_epochs = " << cfg.finetune_epochs << "\n";
    os << "clustering_layers = "
       << (cfg.clustering_auto ? std::string("auto") : join(cfg.clustering_layers)) << "\n";
    os << "trunk_full_width = " << (cfg.trunk_full_width ? "true" : "false") << "\n";
    os << "keep_fraction = " << cfg.keep_fraction << "\n";
    os << "min_classes = " << cfg.min_classes << "\n";
    os << "iscv_split = " << cfg.iscv_split << "\n";
    os << "latency_reps = " << cfg.latency_reps << "\n";
    os << "seed = " << cfg.seed << "\n";
    return os.str();
}

PipelineConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file " + path);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

}  // namespace hsdnet
