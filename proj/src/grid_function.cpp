#include "ddec/grid_function.hpp"

#include <cmath>

namespace ddec {

GridFunction GridFunction::zeros(int rows, int cols, double t_start, double h, int n) {
    if (n < 2) n = 2;
    return GridFunction(rows, cols, t_start, h, Eigen::MatrixXd::Zero(rows * cols, n));
}

GridFunction GridFunction::sample(int rows, int cols, double t_start, double h, int n,
                                  const std::function<Eigen::MatrixXd(double)>& fn) {
    if (n < 2) throw std::invalid_argument("GridFunction::sample: need n >= 2");
    Eigen::MatrixXd data(rows * cols, n);
    for (int k = 0; k < n; ++k) {
        Eigen::MatrixXd v = fn(t_start + h * k);
        if (v.rows() != rows || v.cols() != cols)
            throw std::invalid_argument("GridFunction::sample: fn returned wrong shape");
        data.col(k) = Eigen::Map<const Eigen::VectorXd>(v.data(), rows * cols);
    }
    return GridFunction(rows, cols, t_start, h, std::move(data));
}

Eigen::MatrixXd GridFunction::sample_at(int k) const {
    if (k < 0 || k >= size()) throw std::out_of_range("GridFunction::sample_at");
    Eigen::MatrixXd v(rows_, cols_);
    Eigen::Map<Eigen::VectorXd>(v.data(), rows_ * cols_) = data_.col(k);
    return v;
}

void GridFunction::set_sample(int k, const Eigen::MatrixXd& v) {
    if (k < 0 || k >= size()) throw std::out_of_range("GridFunction::set_sample");
    data_.col(k) = Eigen::Map<const Eigen::VectorXd>(v.data(), rows_ * cols_);
}

Eigen::MatrixXd GridFunction::value(double t) const {
    Eigen::VectorXd flat(rows_ * cols_);
    value_into(t, flat);
    Eigen::MatrixXd v(rows_, cols_);
    Eigen::Map<Eigen::VectorXd>(v.data(), rows_ * cols_) = flat;
    return v;
}

void GridFunction::value_into(double t, Eigen::Ref<Eigen::VectorXd> out) const {
    const int n = size();
    const double x = (t - t_start_) / h_;
    // hard zero outside the domain, with a small node-snapping tolerance
    const double eps = 1e-9;
    if (x < -eps || x > n - 1 + eps) {
        out.setZero();
        return;
    }
    int k = static_cast<int>(std::floor(x));
    double fr = x - k;
    if (fr < eps && k >= 0 && k <= n - 1) {
        out = data_.col(k);
        return;
    }
    if (fr > 1.0 - eps && k + 1 <= n - 1) {
        out = data_.col(k + 1);
        return;
    }
    if (k < 0) { out = data_.col(0); return; }
    if (k >= n - 1) { out = data_.col(n - 1); return; }
    out = (1.0 - fr) * data_.col(k) + fr * data_.col(k + 1);
}

GridFunction GridFunction::resampled(double t_start, double h, int n) const {
    Eigen::MatrixXd data(rows_ * cols_, n);
    Eigen::VectorXd tmp(rows_ * cols_);
    for (int k = 0; k < n; ++k) {
        value_into(t_start + h * k, tmp);
        data.col(k) = tmp;
    }
    return GridFunction(rows_, cols_, t_start, h, std::move(data), q_);
}

GridFunction GridFunction::operator+(const GridFunction& o) const {
    GridFunction r = o.resampled(t_start_, h_, size());
    r.data() += data_;
    return r;
}

GridFunction GridFunction::operator-(const GridFunction& o) const {
    GridFunction r = *this;
    r.data() -= o.resampled(t_start_, h_, size()).data();
    return r;
}

GridFunction GridFunction::scaled(double a) const {
    GridFunction r = *this;
    r.data() *= a;
    return r;
}

double lq_norm(const GridFunction& f, double q) {
    if (q < 1.0) throw std::invalid_argument("lq_norm: q must be >= 1");
    const int n = f.size();
    const double h = f.step();
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        double w = (k == 0 || k == n - 1) ? 0.5 * h : h;
        acc += w * std::pow(f.data().col(k).norm(), q);
    }
    return std::pow(acc, 1.0 / q);
}

}  // namespace ddec
