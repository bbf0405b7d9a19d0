#include "hsdnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace hsdnet {

double learning_rate_at(const TrainSchedule& sched, int epoch) {
    return sched.initial_lr / std::pow(sched.lr_decay_factor, epoch / sched.lr_decay_every);
}

namespace {

void check_schedule(const TrainSchedule& sched) {
    if (sched.epochs < 0 || sched.initial_lr <= 0.0 || sched.lr_decay_factor <= 0.0 ||
        sched.lr_decay_every <= 0 || sched.batch_size <= 0) {
        throw std::invalid_argument("train: schedule fields must be positive");
    }
}

void check_labels(const Dataset& data, int classes) {
    if (data.size() == 0) {
        throw std::invalid_argument("train: empty dataset");
    }
    if (data.class_count() != classes) {
        throw std::invalid_argument("train: dataset class list does not match the network");
    }
    for (int l : data.labels) {
        if (l < 0 || l >= classes) {
            throw std::invalid_argument("train: label " + std::to_string(l) + " out of range");
        }
    }
}

struct BatchLoss {
    double loss_sum = 0.0;
    int correct = 0;
    Tensor logit_grad;  // (B, classes): (p - y) / B
};

BatchLoss cross_entropy_grad(const Tensor& probs, const std::vector<int>& labels) {
    const int b = probs.shape[0], classes = probs.shape[1];
    BatchLoss out;
    out.logit_grad = Tensor({b, classes});
    const double inv_b = 1.0 / b;
    for (int i = 0; i < b; ++i) {
        const double* p = probs.ptr() + static_cast<std::int64_t>(i) * classes;
        double* g = out.logit_grad.ptr() + static_cast<std::int64_t>(i) * classes;
        const int y = labels[static_cast<std::size_t>(i)];
        out.loss_sum += -std::log(p[y]);
        int arg = 0;
        for (int c = 0; c < classes; ++c) {
            if (p[c] > p[arg]) arg = c;
            g[c] = (p[c] - (c == y ? 1.0 : 0.0)) * inv_b;
        }
        if (arg == y) ++out.correct;
    }
    return out;
}

template <typename Net, typename ForwardFn, typename BackwardFn, typename ParamsOf>
TrainHistory run_training(Net& net, const Dataset& data, const TrainSchedule& sched,
                          ForwardFn&& run_forward, BackwardFn&& run_backward, ParamsOf&& params_of,
                          int classes) {
    check_schedule(sched);
    check_labels(data, classes);

    TrainHistory history;
    std::mt19937_64 rng(sched.seed);
    std::vector<int> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < sched.epochs; ++epoch) {
        const double lr = learning_rate_at(sched, epoch);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        int correct = 0;
        int batch_index = 0;
        for (int start = 0; start < data.size(); start += sched.batch_size, ++batch_index) {
            const int count = std::min(sched.batch_size, data.size() - start);
            std::vector<int> idx(order.begin() + start, order.begin() + start + count);
            std::vector<int> labels(static_cast<std::size_t>(count));
            for (int i = 0; i < count; ++i) {
                labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            }
            Tensor batch = stack_images(data, idx);
            auto fr = run_forward(net, batch);
            BatchLoss bl = cross_entropy_grad(fr.probs, labels);
            if (!std::isfinite(bl.loss_sum)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batch_index));
            }
            loss_sum += bl.loss_sum;
            correct += bl.correct;
            GradientStore gs = run_backward(net, fr, bl.logit_grad);
            sgd_step(params_of(net), gs, lr);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.mean_loss = loss_sum / data.size();
        stats.train_accuracy = static_cast<double>(correct) / data.size();
        history.push_back(stats);
    }
    return history;
}

struct ChainFr {
    ChainForward fr;
    Tensor probs;
};

int thread_budget() {
    const char* env = std::getenv("HSDNET_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n > 0 ? n : 1;
}

template <typename ForwardProbs>
double evaluate_impl(const Dataset& data, int classes, const std::vector<int>& restrict_to,
                     ForwardProbs&& probs_of) {
    if (!restrict_to.empty()) {
        for (int c : restrict_to) {
            if (c < 0 || c >= classes) {
                throw std::invalid_argument("evaluate: class " + std::to_string(c) +
                                            " outside the class list");
            }
        }
    }
    std::vector<int> keep;
    for (int i = 0; i < data.size(); ++i) {
        const int label = data.labels[static_cast<std::size_t>(i)];
        if (restrict_to.empty() ||
            std::find(restrict_to.begin(), restrict_to.end(), label) != restrict_to.end()) {
            keep.push_back(i);
        }
    }
    if (keep.empty()) {
        throw std::invalid_argument("evaluate: no samples fall inside the requested class subset");
    }

    const int threads = std::min<int>(thread_budget(), static_cast<int>(keep.size()));
    std::vector<long long> counts(static_cast<std::size_t>(threads), 0);
    auto worker = [&](int t) {
        const std::size_t lo = keep.size() * static_cast<std::size_t>(t) / threads;
        const std::size_t hi = keep.size() * static_cast<std::size_t>(t + 1) / threads;
        long long local = 0;
        constexpr std::size_t chunk = 16;
        for (std::size_t s = lo; s < hi; s += chunk) {
            const std::size_t n = std::min(chunk, hi - s);
            std::vector<int> idx(keep.begin() + static_cast<std::ptrdiff_t>(s),
                                 keep.begin() + static_cast<std::ptrdiff_t>(s + n));
            Tensor probs = probs_of(idx);
            for (std::size_t i = 0; i < n; ++i) {
                const double* p = probs.ptr() + static_cast<std::int64_t>(i) * classes;
                int arg = -1;
                if (restrict_to.empty()) {
                    arg = 0;
                    for (int c = 1; c < classes; ++c) {
                        if (p[c] > p[arg]) arg = c;
                    }
                } else {
                    for (int c : restrict_to) {
                        if (arg < 0 || p[c] > p[arg]) arg = c;
                    }
                }
                if (arg == data.labels[static_cast<std::size_t>(idx[i])]) ++local;
            }
        }
        counts[static_cast<std::size_t>(t)] = local;
    };

    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    long long correct = 0;
    for (long long c : counts) correct += c;
    return static_cast<double>(correct) / static_cast<double>(keep.size());
}

}  // namespace

TrainHistory train(ChainNet& net, const Dataset& data, const TrainSchedule& sched) {
    return run_training(
        net, data, sched,
        [](ChainNet& n, const Tensor& batch) {
            ChainFr out{forward(n, batch), {}};
            out.probs = out.fr.probs();
            return out;
        },
        [](ChainNet& n, const ChainFr& fr, const Tensor& g) {
            return backward(n, fr.fr, g, {}, /*at_logits=*/true);
        },
        [](ChainNet& n) -> ParamStore& { return n.params; }, net.class_count());
}

TrainHistory finetune(TreeNet& tree, const Dataset& data, const TrainSchedule& sched) {
    if (!tree.parameterized()) {
        throw std::invalid_argument("finetune: tree edges are unfilled; transfer parameters first");
    }
    return run_training(
        tree, data, sched,
        [](TreeNet& t, const Tensor& batch) { return forward(t, batch); },
        [](TreeNet& t, const TreeForward& fr, const Tensor& g) {
            return backward(t, fr, g, /*at_logits=*/true);
        },
        [](TreeNet& t) -> ParamStore& { return t.edges; }, tree.class_count());
}

double evaluate(const ChainNet& net, const Dataset& data, const std::vector<int>& restrict_to) {
    return evaluate_impl(data, net.class_count(), restrict_to, [&](const std::vector<int>& idx) {
        Tensor batch = stack_images(data, idx);
        return forward(net, batch).probs();
    });
}

double evaluate(const TreeNet& tree, const Dataset& data, const std::vector<int>& restrict_to) {
    return evaluate_impl(data, tree.class_count(), restrict_to, [&](const std::vector<int>& idx) {
        Tensor batch = stack_images(data, idx);
        return forward(tree, batch).probs;
    });
}

namespace {

template <typename ProbsFn>
double mean_ce_impl(const Dataset& data, int classes, ProbsFn&& probs_of) {
    check_labels(data, classes);
    double loss = 0.0;
    constexpr int chunk = 32;
    for (int start = 0; start < data.size(); start += chunk) {
        const int count = std::min(chunk, data.size() - start);
        std::vector<int> idx(static_cast<std::size_t>(count));
        std::iota(idx.begin(), idx.end(), start);
        Tensor probs = probs_of(idx);
        for (int i = 0; i < count; ++i) {
            const int y = data.labels[static_cast<std::size_t>(start + i)];
            loss += -std::log(probs.data[static_cast<std::size_t>(i) * classes + y]);
        }
    }
    return loss / data.size();
}

}  // namespace

double mean_cross_entropy(const ChainNet& net, const Dataset& data) {
    return mean_ce_impl(data, net.class_count(), [&](const std::vector<int>& idx) {
        return forward(net, stack_images(data, idx)).probs();
    });
}

double mean_cross_entropy(const TreeNet& tree, const Dataset& data) {
    return mean_ce_impl(data, tree.class_count(), [&](const std::vector<int>& idx) {
        return forward(tree, stack_images(data, idx)).probs;
    });
}

std::string history_csv(const TrainHistory& history) {
    std::ostringstream os;
    os << "epoch,lr,mean_loss,train_accuracy\n";
    os.precision(17);
    for (const auto& e : history) {
        os << e.epoch << "," << e.lr << "," << e.mean_loss << "," << e.train_accuracy << "\n";
    }
    return os.str();
}

}  // namespace hsdnet
