#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace wmg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Edge {
    int from = 0;
    int to = 0;

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Error hierarchy. Everything thrown by the library derives from Error.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A file could not be opened, read, or written.
class IoError : public Error {
  public:
    using Error::Error;
};

class ParseError : public Error {
  public:
    ParseError(std::string locus, const std::string& what)
        : Error(locus.empty() ? what : locus + ": " + what), locus_(std::move(locus)) {}

    const std::string& locus() const noexcept { return locus_; }

  private:
    std::string locus_;
};

class ValidationError : public Error {
  public:
    explicit ValidationError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const noexcept { return violations_; }

  private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "graph validation failed";
        for (const auto& s : v) {
            out += "; ";
            out += s;
        }
        return out;
    }

    std::vector<std::string> violations_;
};

// (I - P + Pi) or a taboo system could not be factorized.
class SingularSystemError : public Error {
  public:
    SingularSystemError(const std::string& what, double cond)
        : Error(what + " (condition estimate " + std::to_string(cond) + ")"), cond_(cond) {}

    double cond() const noexcept { return cond_; }

  private:
    double cond_;
};

class ReducibleChainError : public Error {
  public:
    ReducibleChainError(int from, int to)
        : Error("transition matrix is reducible: node " + std::to_string(to) +
                " is unreachable from node " + std::to_string(from)),
          from_(from), to_(to) {}

    int from() const noexcept { return from_; }
    int to() const noexcept { return to_; }

  private:
    int from_;
    int to_;
};

namespace detail {

// 1 1^T [A]_dg : every row equals the diagonal of A.
inline Matrix ones_dg(const Matrix& a) {
    const Eigen::Index n = a.rows();
    return Vector::Ones(n) * a.diagonal().transpose();
}

// [A]_dg
inline Matrix dg_part(const Matrix& a) {
    return Matrix(a.diagonal().asDiagonal());
}

inline double max_abs(const Matrix& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

} // namespace detail

} // namespace wmg
