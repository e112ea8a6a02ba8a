#include "gfus/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gfus {

namespace {

constexpr double kGeluCubic = 0.044715;
const double kGeluScale = std::sqrt(2.0 / 3.14159265358979323846);

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

int last_dim(const Tensor& t) {
    if (t.rank() == 0) {
        throw ShapeError("rowwise op on rank-0 tensor");
    }
    return t.shape.back();
}

} // namespace

Node* Graph::make(Tensor value, OpKind op, std::vector<Node*> parents) {
    Node n;
    n.grad = Tensor::zeros_like(value);
    n.value = std::move(value);
    n.op = op;
    n.parents = std::move(parents);
    n.index = nodes_.size();
    nodes_.push_back(std::move(n));
    return &nodes_.back();
}

Node* Graph::leaf(Tensor value) {
    return make(std::move(value), OpKind::leaf, {});
}

Node* Graph::matmul(Node* a, Node* b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 ||
        a->value.shape[1] != b->value.shape[0]) {
        throw ShapeError("matmul: inner dimensions differ: " + shape_str(a->value.shape) +
                         " vs " + shape_str(b->value.shape));
    }
    Node* out = make(matmul_values(a->value, b->value), OpKind::matmul, {a, b});
    out->back = [](Node& n) {
        Node* a = n.parents[0];
        Node* b = n.parents[1];
        const Tensor da = matmul_values(n.grad, transpose_values(b->value));
        const Tensor db = matmul_values(transpose_values(a->value), n.grad);
        for (std::size_t i = 0; i < da.data.size(); ++i) {
            a->grad.data[i] += da.data[i];
        }
        for (std::size_t i = 0; i < db.data.size(); ++i) {
            b->grad.data[i] += db.data[i];
        }
    };
    return out;
}

Node* Graph::add(Node* a, Node* b) {
    if (!a->value.same_shape(b->value)) {
        throw ShapeError("add: shape mismatch: " + shape_str(a->value.shape) + " vs " +
                         shape_str(b->value.shape));
    }
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        v.data[i] += b->value.data[i];
    }
    Node* out = make(std::move(v), OpKind::add, {a, b});
    out->back = [](Node& n) {
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            n.parents[0]->grad.data[i] += n.grad.data[i];
            n.parents[1]->grad.data[i] += n.grad.data[i];
        }
    };
    return out;
}

Node* Graph::add_rowvec(Node* x, Node* b) {
    const int c = last_dim(x->value);
    if (static_cast<std::size_t>(c) != b->value.numel()) {
        throw ShapeError("add_rowvec: row width " + std::to_string(c) +
                         " vs vector of " + shape_str(b->value.shape));
    }
    Tensor v = x->value;
    const std::size_t rows = v.numel() / static_cast<std::size_t>(c);
    for (std::size_t r = 0; r < rows; ++r) {
        for (int j = 0; j < c; ++j) {
            v.data[r * c + j] += b->value.data[j];
        }
    }
    Node* out = make(std::move(v), OpKind::add_rowvec, {x, b});
    out->back = [c](Node& n) {
        Node* x = n.parents[0];
        Node* b = n.parents[1];
        const std::size_t rows = n.grad.numel() / static_cast<std::size_t>(c);
        for (std::size_t r = 0; r < rows; ++r) {
            for (int j = 0; j < c; ++j) {
                const double g = n.grad.data[r * c + j];
                x->grad.data[r * c + j] += g;
                b->grad.data[j] += g;
            }
        }
    };
    return out;
}

Node* Graph::mul(Node* a, Node* b) {
    if (!a->value.same_shape(b->value)) {
        throw ShapeError("mul: shape mismatch: " + shape_str(a->value.shape) + " vs " +
                         shape_str(b->value.shape));
    }
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        v.data[i] *= b->value.data[i];
    }
    Node* out = make(std::move(v), OpKind::mul, {a, b});
    out->back = [](Node& n) {
        Node* a = n.parents[0];
        Node* b = n.parents[1];
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            a->grad.data[i] += n.grad.data[i] * b->value.data[i];
            b->grad.data[i] += n.grad.data[i] * a->value.data[i];
        }
    };
    return out;
}

Node* Graph::mul_colvec(Node* x, Node* a) {
    const int rows = x->value.rows();
    const int c = x->value.cols();
    if (a->value.rank() != 2 || a->value.shape[0] != rows || a->value.shape[1] != 1) {
        throw ShapeError("mul_colvec: expected [" + std::to_string(rows) + "x1], got " +
                         shape_str(a->value.shape));
    }
    Tensor v = x->value;
    for (int r = 0; r < rows; ++r) {
        const double s = a->value.data[static_cast<std::size_t>(r)];
        for (int j = 0; j < c; ++j) {
            v.data[static_cast<std::size_t>(r) * c + j] *= s;
        }
    }
    Node* out = make(std::move(v), OpKind::mul_colvec, {x, a});
    out->back = [rows, c](Node& n) {
        Node* x = n.parents[0];
        Node* a = n.parents[1];
        for (int r = 0; r < rows; ++r) {
            const double s = a->value.data[static_cast<std::size_t>(r)];
            double acc = 0.0;
            for (int j = 0; j < c; ++j) {
                const std::size_t i = static_cast<std::size_t>(r) * c + j;
                x->grad.data[i] += n.grad.data[i] * s;
                acc += n.grad.data[i] * x->value.data[i];
            }
            a->grad.data[static_cast<std::size_t>(r)] += acc;
        }
    };
    return out;
}

Node* Graph::affine(Node* x, double scale, double shift) {
    Tensor v = x->value;
    for (double& d : v.data) {
        d = scale * d + shift;
    }
    Node* out = make(std::move(v), OpKind::affine, {x});
    out->back = [scale](Node& n) {
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            n.parents[0]->grad.data[i] += scale * n.grad.data[i];
        }
    };
    return out;
}

Node* Graph::sigmoid(Node* x) {
    Tensor v = x->value;
    for (double& d : v.data) {
        d = stable_sigmoid(d);
    }
    Node* out = make(std::move(v), OpKind::sigmoid, {x});
    out->back = [](Node& n) {
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            const double s = n.value.data[i];
            n.parents[0]->grad.data[i] += n.grad.data[i] * s * (1.0 - s);
        }
    };
    return out;
}

Node* Graph::gelu(Node* x) {
    Tensor v = x->value;
    for (double& d : v.data) {
        const double u = kGeluScale * (d + kGeluCubic * d * d * d);
        d = 0.5 * d * (1.0 + std::tanh(u));
    }
    Node* out = make(std::move(v), OpKind::gelu, {x});
    out->back = [](Node& n) {
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            const double xv = n.parents[0]->value.data[i];
            const double u = kGeluScale * (xv + kGeluCubic * xv * xv * xv);
            const double t = std::tanh(u);
            const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * xv * xv);
            const double d = 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du;
            n.parents[0]->grad.data[i] += n.grad.data[i] * d;
        }
    };
    return out;
}

Node* Graph::softmax(Node* x) {
    const int c = last_dim(x->value);
    Tensor v = x->value;
    const std::size_t rows = v.numel() / static_cast<std::size_t>(c);
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = &v.data[r * c];
        double mx = row[0];
        for (int j = 1; j < c; ++j) {
            mx = std::max(mx, row[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            denom += row[j];
        }
        for (int j = 0; j < c; ++j) {
            row[j] /= denom;
        }
    }
    Node* out = make(std::move(v), OpKind::softmax, {x});
    out->back = [c](Node& n) {
        const std::size_t rows = n.grad.numel() / static_cast<std::size_t>(c);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* w = &n.value.data[r * c];
            const double* dy = &n.grad.data[r * c];
            double dot = 0.0;
            for (int j = 0; j < c; ++j) {
                dot += w[j] * dy[j];
            }
            for (int j = 0; j < c; ++j) {
                n.parents[0]->grad.data[r * c + j] += w[j] * (dy[j] - dot);
            }
        }
    };
    return out;
}

Node* Graph::masked_softmax(Node* x, std::vector<std::uint8_t> allowed) {
    const int c = last_dim(x->value);
    if (allowed.size() != x->value.numel()) {
        throw ShapeError("masked_softmax: mask size " + std::to_string(allowed.size()) +
                         " vs tensor " + shape_str(x->value.shape));
    }
    Tensor v = x->value;
    const std::size_t rows = v.numel() / static_cast<std::size_t>(c);
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = &v.data[r * c];
        const std::uint8_t* ok = &allowed[r * c];
        double mx = 0.0;
        bool any = false;
        for (int j = 0; j < c; ++j) {
            if (ok[j]) {
                mx = any ? std::max(mx, row[j]) : row[j];
                any = true;
            }
        }
        if (!any) {
            throw InternalError("masked_softmax: row " + std::to_string(r) +
                                " has no allowed entries");
        }
        double denom = 0.0;
        for (int j = 0; j < c; ++j) {
            if (ok[j]) {
                row[j] = std::exp(row[j] - mx);
                denom += row[j];
            } else {
                row[j] = 0.0;
            }
        }
        for (int j = 0; j < c; ++j) {
            row[j] /= denom;
        }
    }
    Node* out = make(std::move(v), OpKind::masked_softmax, {x});
    out->back = [c, allowed = std::move(allowed)](Node& n) {
        const std::size_t rows = n.grad.numel() / static_cast<std::size_t>(c);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* w = &n.value.data[r * c];
            const double* dy = &n.grad.data[r * c];
            const std::uint8_t* ok = &allowed[r * c];
            double dot = 0.0;
            for (int j = 0; j < c; ++j) {
                if (ok[j]) {
                    dot += w[j] * dy[j];
                }
            }
            for (int j = 0; j < c; ++j) {
                if (ok[j]) {
                    n.parents[0]->grad.data[r * c + j] += w[j] * (dy[j] - dot);
                }
            }
        }
    };
    return out;
}

Node* Graph::layer_norm(Node* x, Node* gain, Node* bias, double eps) {
    const int c = last_dim(x->value);
    if (gain->value.numel() != static_cast<std::size_t>(c) ||
        bias->value.numel() != static_cast<std::size_t>(c)) {
        throw ShapeError("layer_norm: gain/bias must match last dimension " + std::to_string(c));
    }
    Tensor v = x->value;
    const std::size_t rows = v.numel() / static_cast<std::size_t>(c);
    // Cache (mean, inv std) per row for the backward pass.
    std::vector<double> mean(rows), inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = &v.data[r * c];
        double mu = 0.0;
        for (int j = 0; j < c; ++j) {
            mu += row[j];
        }
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = row[j] - mu;
            var += d * d;
        }
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        inv_std[r] = is;
        for (int j = 0; j < c; ++j) {
            row[j] = (row[j] - mu) * is * gain->value.data[j] + bias->value.data[j];
        }
    }
    Node* out = make(std::move(v), OpKind::layer_norm, {x, gain, bias});
    out->back = [c, mean = std::move(mean), inv_std = std::move(inv_std)](Node& n) {
        Node* x = n.parents[0];
        Node* gain = n.parents[1];
        Node* bias = n.parents[2];
        const std::size_t rows = n.grad.numel() / static_cast<std::size_t>(c);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = &x->value.data[r * c];
            const double* dy = &n.grad.data[r * c];
            const double mu = mean[r];
            const double is = inv_std[r];
            double sum_dxhat = 0.0;
            double sum_dxhat_xhat = 0.0;
            for (int j = 0; j < c; ++j) {
                const double xhat = (xr[j] - mu) * is;
                const double dxhat = dy[j] * gain->value.data[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
                gain->grad.data[j] += dy[j] * xhat;
                bias->grad.data[j] += dy[j];
            }
            for (int j = 0; j < c; ++j) {
                const double xhat = (xr[j] - mu) * is;
                const double dxhat = dy[j] * gain->value.data[j];
                x->grad.data[r * c + j] +=
                    (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / c) * is;
            }
        }
    };
    return out;
}

Node* Graph::embed(Node* table, std::vector<int> ids) {
    const int rows = table->value.rows();
    const int c = table->value.cols();
    for (int id : ids) {
        if (id < 0 || id >= rows) {
            throw InternalError("embed: id " + std::to_string(id) + " out of range [0, " +
                                std::to_string(rows) + ")");
        }
    }
    Tensor v({static_cast<int>(ids.size()), c});
    for (std::size_t t = 0; t < ids.size(); ++t) {
        const double* src = &table->value.data[static_cast<std::size_t>(ids[t]) * c];
        std::copy(src, src + c, &v.data[t * c]);
    }
    Node* out = make(std::move(v), OpKind::embed, {table});
    out->back = [c, ids = std::move(ids)](Node& n) {
        Node* table = n.parents[0];
        for (std::size_t t = 0; t < ids.size(); ++t) {
            double* dst = &table->grad.data[static_cast<std::size_t>(ids[t]) * c];
            const double* g = &n.grad.data[t * c];
            for (int j = 0; j < c; ++j) {
                dst[j] += g[j];
            }
        }
    };
    return out;
}

Node* Graph::transpose(Node* x) {
    Node* out = make(transpose_values(x->value), OpKind::transpose, {x});
    out->back = [](Node& n) {
        const Tensor gt = transpose_values(n.grad);
        for (std::size_t i = 0; i < gt.data.size(); ++i) {
            n.parents[0]->grad.data[i] += gt.data[i];
        }
    };
    return out;
}

Node* Graph::slice_cols(Node* x, int start, int width) {
    const int rows = x->value.rows();
    const int c = x->value.cols();
    if (start < 0 || width <= 0 || start + width > c) {
        throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + width) + ") out of " + std::to_string(c));
    }
    Tensor v({rows, width});
    for (int r = 0; r < rows; ++r) {
        const double* src = &x->value.data[static_cast<std::size_t>(r) * c + start];
        std::copy(src, src + width, &v.data[static_cast<std::size_t>(r) * width]);
    }
    Node* out = make(std::move(v), OpKind::slice_cols, {x});
    out->back = [start, width, c](Node& n) {
        const int rows = n.grad.rows();
        for (int r = 0; r < rows; ++r) {
            const double* g = &n.grad.data[static_cast<std::size_t>(r) * width];
            double* dst = &n.parents[0]->grad.data[static_cast<std::size_t>(r) * c + start];
            for (int j = 0; j < width; ++j) {
                dst[j] += g[j];
            }
        }
    };
    return out;
}

Node* Graph::concat_cols(const std::vector<Node*>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no parts");
    }
    const int rows = parts[0]->value.rows();
    int total = 0;
    for (Node* p : parts) {
        if (p->value.rows() != rows) {
            throw ShapeError("concat_cols: row counts differ");
        }
        total += p->value.cols();
    }
    Tensor v({rows, total});
    int off = 0;
    for (Node* p : parts) {
        const int w = p->value.cols();
        for (int r = 0; r < rows; ++r) {
            const double* src = &p->value.data[static_cast<std::size_t>(r) * w];
            std::copy(src, src + w, &v.data[static_cast<std::size_t>(r) * total + off]);
        }
        off += w;
    }
    Node* out = make(std::move(v), OpKind::concat_cols, parts);
    out->back = [total](Node& n) {
        const int rows = n.grad.rows();
        int off = 0;
        for (Node* p : n.parents) {
            const int w = p->value.cols();
            for (int r = 0; r < rows; ++r) {
                const double* g = &n.grad.data[static_cast<std::size_t>(r) * total + off];
                double* dst = &p->grad.data[static_cast<std::size_t>(r) * w];
                for (int j = 0; j < w; ++j) {
                    dst[j] += g[j];
                }
            }
            off += w;
        }
    };
    return out;
}

Node* Graph::dropout(Node* x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (rate == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x->value.numel());
    for (double& m : mask) {
        m = (rng.uniform01() < rate) ? 0.0 : keep_scale;
    }
    Tensor v = x->value;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        v.data[i] *= mask[i];
    }
    Node* out = make(std::move(v), OpKind::dropout, {x});
    out->back = [mask = std::move(mask)](Node& n) {
        for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
            n.parents[0]->grad.data[i] += n.grad.data[i] * mask[i];
        }
    };
    return out;
}

Node* Graph::sum(Node* x) {
    double acc = 0.0;
    for (double v : x->value.data) {
        acc += v;
    }
    Node* out = make(Tensor::scalar(acc), OpKind::sum, {x});
    out->back = [](Node& n) {
        const double g = n.grad.data[0];
        for (double& d : n.parents[0]->grad.data) {
            d += g;
        }
    };
    return out;
}

Node* Graph::cross_entropy_mean(Node* logits, std::vector<int> targets, int ignore_id) {
    const int rows = logits->value.rows();
    const int vocab = logits->value.cols();
    if (static_cast<int>(targets.size()) != rows) {
        throw ShapeError("cross_entropy_mean: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(rows) + " logit rows");
    }
    int supervised = 0;
    for (int t : targets) {
        if (t == ignore_id) {
            continue;
        }
        if (t < 0 || t >= vocab) {
            throw InternalError("cross_entropy_mean: target id " + std::to_string(t) +
                                " out of range [0, " + std::to_string(vocab) + ")");
        }
        ++supervised;
    }
    if (supervised == 0) {
        throw InternalError("cross_entropy_mean: no supervised positions");
    }
    double total = 0.0;
    for (int r = 0; r < rows; ++r) {
        if (targets[r] == ignore_id) {
            continue;
        }
        const double* row = &logits->value.data[static_cast<std::size_t>(r) * vocab];
        double mx = row[0];
        for (int j = 1; j < vocab; ++j) {
            mx = std::max(mx, row[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < vocab; ++j) {
            denom += std::exp(row[j] - mx);
        }
        total += mx + std::log(denom) - row[targets[r]];
    }
    Node* out = make(Tensor::scalar(total / supervised), OpKind::cross_entropy, {logits});
    out->back = [vocab, supervised, targets = std::move(targets), ignore_id](Node& n) {
        Node* logits = n.parents[0];
        const double g = n.grad.data[0] / supervised;
        const int rows = logits->value.rows();
        for (int r = 0; r < rows; ++r) {
            if (targets[r] == ignore_id) {
                continue;
            }
            const double* row = &logits->value.data[static_cast<std::size_t>(r) * vocab];
            double* grow = &logits->grad.data[static_cast<std::size_t>(r) * vocab];
            double mx = row[0];
            for (int j = 1; j < vocab; ++j) {
                mx = std::max(mx, row[j]);
            }
            double denom = 0.0;
            for (int j = 0; j < vocab; ++j) {
                denom += std::exp(row[j] - mx);
            }
            for (int j = 0; j < vocab; ++j) {
                const double p = std::exp(row[j] - mx) / denom;
                grow[j] += g * (p - (j == targets[r] ? 1.0 : 0.0));
            }
        }
    };
    return out;
}

void Graph::backward(Node* loss) {
    if (loss->value.numel() != 1) {
        throw InternalError("backward: loss must be scalar, got shape " +
                            shape_str(loss->value.shape));
    }
    loss->grad.data[0] = 1.0;
    for (std::size_t i = loss->index + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.back) {
            n.back(n);
        }
    }
}

double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& theta,
                         const Tensor& analytic_grad, double step) {
    if (!theta.same_shape(analytic_grad)) {
        throw ShapeError("finite_diff_check: grad shape " + shape_str(analytic_grad.shape) +
                         " vs theta " + shape_str(theta.shape));
    }
    Tensor probe = theta;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.data.size(); ++i) {
        const double saved = probe.data[i];
        probe.data[i] = saved + step;
        const double fp = f(probe);
        probe.data[i] = saved - step;
        const double fm = f(probe);
        probe.data[i] = saved;
        const double numeric = (fp - fm) / (2.0 * step);
        const double analytic = analytic_grad.data[i];
        const double scale = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
        worst = std::max(worst, std::fabs(analytic - numeric) / scale);
    }
    return worst;
}

} // namespace gfus
