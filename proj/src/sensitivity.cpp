#include "hsdnet/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hsdnet {

std::vector<int> all_conv_layers(const ChainNet& net) {
    std::vector<int> out(static_cast<std::size_t>(net.conv_count()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(i) + 1;
    return out;
}

std::map<int, IscvTable> iscv_all_layers(const ChainNet& net, const Dataset& data,
                                         const std::vector<int>& layers) {
    if (layers.empty()) {
        throw std::invalid_argument("iscv_all_layers: no layers requested");
    }
    if (data.size() == 0) {
        throw std::invalid_argument("iscv_all_layers: empty dataset");
    }
    if (data.class_count() != net.class_count()) {
        throw std::invalid_argument("iscv_all_layers: dataset classes do not match the network");
    }
    const int conv_count = net.conv_count();
    for (int l : layers) {
        if (l < 1 || l > conv_count) {
            throw std::invalid_argument("iscv_all_layers: conv layer " + std::to_string(l) +
                                        " out of range 1.." + std::to_string(conv_count));
        }
    }
    for (int label : data.labels) {
        if (label < 0 || label >= net.class_count()) {
            throw std::invalid_argument("iscv_all_layers: dataset label " + std::to_string(label) +
                                        " outside the class list");
        }
    }

    const int classes = net.class_count();
    std::map<int, IscvTable> tables;
    for (int l : layers) {
        IscvTable t;
        t.layer = l;
        t.channels = net.conv_width(l);
        t.raw.assign(static_cast<std::size_t>(classes),
                     std::vector<double>(static_cast<std::size_t>(t.channels), 0.0));
        t.present.assign(static_cast<std::size_t>(classes), false);
        tables[l] = std::move(t);
    }

    // One forward and one backward per sample; every requested layer's scale
    // gradient is read off the same backward sweep. The seed is the
    // derivative of the sample's true-class probability with respect to the
    // probability vector, so the scale gradients are d p_c / d w_k at w = 1.
    for (int i = 0; i < data.size(); ++i) {
        const int label = data.labels[static_cast<std::size_t>(i)];
        Tensor batch = stack_images(data, {i});
        ChainForward fr = forward(net, batch);
        Tensor seed = Tensor::zeros(fr.probs().shape);
        seed.data[static_cast<std::size_t>(label)] = 1.0;
        GradientStore gs = backward(net, fr, seed, layers);
        for (auto& [layer, table] : tables) {
            (void)layer;
            const std::vector<double>& pg = gs.probe_scales.at(table.layer);
            std::vector<double>& row = table.raw[static_cast<std::size_t>(label)];
            for (std::size_t k = 0; k < row.size(); ++k) {
                row[k] += std::abs(pg[k]);
            }
            table.present[static_cast<std::size_t>(label)] = true;
        }
    }

    for (auto& [layer, table] : tables) {
        (void)layer;
        table = normalize_iscv(std::move(table));
    }
    return tables;
}

IscvTable impact_scores(const ChainNet& net, const Dataset& data, int layer) {
    std::map<int, IscvTable> tables = iscv_all_layers(net, data, {layer});
    IscvTable t = std::move(tables.at(layer));
    t.norm.clear();  // raw scores only; callers normalize explicitly
    return t;
}

IscvTable normalize_iscv(IscvTable table) {
    table.norm.assign(table.raw.size(), {});
    for (std::size_t c = 0; c < table.raw.size(); ++c) {
        const std::vector<double>& row = table.raw[c];
        for (double v : row) {
            if (v < 0.0) {
                throw std::invalid_argument("normalize_iscv: negative raw score");
            }
        }
        double mx = 0.0;
        for (double v : row) mx = std::max(mx, v);
        std::vector<double> out(row.size(), 0.0);
        if (mx > 0.0) {
            for (std::size_t k = 0; k < row.size(); ++k) out[k] = row[k] / mx;
        }
        table.norm[c] = std::move(out);
    }
    return table;
}

}  // namespace hsdnet
