#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <vector>

namespace ddec {

/// Uniformly sampled matrix- or vector-valued function on an interval.
/// Evaluation between nodes is by linear interpolation; outside the
/// domain the function is zero. Samples are stored vectorised, one
/// column per node.
class GridFunction {
public:
    GridFunction() = default;

    GridFunction(int rows, int cols, double t_start, double h, Eigen::MatrixXd data,
                 double q = 2.0)
        : rows_(rows), cols_(cols), t_start_(t_start), h_(h), q_(q),
          data_(std::move(data)) {
        if (rows_ <= 0 || cols_ <= 0) throw std::invalid_argument("GridFunction: bad shape");
        if (h_ <= 0.0) throw std::invalid_argument("GridFunction: step must be positive");
        if (data_.rows() != rows_ * cols_)
            throw std::invalid_argument("GridFunction: data rows != rows*cols");
        if (data_.cols() < 2)
            throw std::invalid_argument("GridFunction: at least 2 samples required");
    }

    static GridFunction zeros(int rows, int cols, double t_start, double h, int n);

    /// Sample fn(t) at the n grid nodes. fn returns a rows x cols matrix.
    static GridFunction sample(int rows, int cols, double t_start, double h, int n,
                               const std::function<Eigen::MatrixXd(double)>& fn);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int size() const { return static_cast<int>(data_.cols()); }
    double t_start() const { return t_start_; }
    double t_end() const { return t_start_ + h_ * (size() - 1); }
    double step() const { return h_; }
    double node(int k) const { return t_start_ + h_ * k; }
    double exponent() const { return q_; }
    void set_exponent(double q) { q_ = q; }

    const Eigen::MatrixXd& data() const { return data_; }
    Eigen::MatrixXd& data() { return data_; }

    Eigen::MatrixXd sample_at(int k) const;
    void set_sample(int k, const Eigen::MatrixXd& v);

    /// Linear interpolation; zero outside [t_start, t_end].
    Eigen::MatrixXd value(double t) const;

    /// Vectorised interpolation, avoids temporaries in hot loops.
    void value_into(double t, Eigen::Ref<Eigen::VectorXd> out) const;

    /// Resample onto a new grid (linear interpolation, zero outside).
    GridFunction resampled(double t_start, double h, int n) const;

    GridFunction operator+(const GridFunction& o) const;
    GridFunction operator-(const GridFunction& o) const;
    GridFunction scaled(double a) const;

    double max_abs() const { return data_.size() ? data_.cwiseAbs().maxCoeff() : 0.0; }

private:
    int rows_ = 0, cols_ = 0;
    double t_start_ = 0.0, h_ = 1.0, q_ = 2.0;
    Eigen::MatrixXd data_;  // (rows*cols) x n
};

/// L^q norm of the interpolant: composite trapezoid of ||f(t)||^q, then q-th
/// root. Vector samples use the Euclidean norm, matrix samples Frobenius.
double lq_norm(const GridFunction& f, double q);

}  // namespace ddec
