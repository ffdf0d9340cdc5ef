#include "doctest.h"

#include "cyclemae/autograd.hpp"

#include <cmath>
#include <functional>
#include <vector>

using namespace cyclemae;

namespace {

Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = scale * standard_normal(rng);
    }
    return m;
}

using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Max relative error between tape gradients and central differences of a
/// scalar function of several input matrices.
double check_op(const Builder& build, std::vector<Mat> inputs) {
    auto evaluate = [&](const std::vector<Mat>& xs) {
        ad::Tape tape;
        std::vector<ad::Var> vars;
        for (const Mat& x : xs) {
            vars.push_back(tape.push(x, true, {}));
        }
        return tape.value(build(tape, vars))(0, 0);
    };
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Mat& x : inputs) {
        vars.push_back(tape.push(x, true, {}));
    }
    tape.backward(build(tape, vars));

    double worst = 0.0;
    const double h = 1e-6;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Mat analytic = tape.grad(vars[k]).size() ? tape.grad(vars[k])
                                                         : Mat::Zero(inputs[k].rows(), inputs[k].cols());
        for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
            const double saved = inputs[k].data()[i];
            inputs[k].data()[i] = saved + h;
            const double up = evaluate(inputs);
            inputs[k].data()[i] = saved - h;
            const double down = evaluate(inputs);
            inputs[k].data()[i] = saved;
            const double fd = (up - down) / (2 * h);
            const double a = analytic.data()[i];
            worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}));
        }
    }
    return worst;
}

/// Reduces a matrix to a scalar with fixed random weights so that every
/// output entry carries a distinct gradient.
ad::Var weigh(ad::Tape& t, ad::Var v) {
    const Mat& x = t.value(v);
    Rng rng(77);
    const ad::Var w = t.constant(random_mat(static_cast<int>(x.rows()), static_cast<int>(x.cols()), rng));
    const ad::Var prod = ad::matmul_bt(t, ad::mean_rows(t, v), ad::mean_rows(t, w));
    const ad::Var sq = ad::matmul_bt(t, v, w);
    const ad::Var parts[] = {prod, ad::mse(t, sq, Mat::Zero(x.rows(), x.rows()))};
    return ad::sum(t, parts);
}

}  // namespace

TEST_CASE("linear algebra ops have correct gradients") {
    Rng rng(1);
    CHECK(check_op([](ad::Tape& t, const auto& v) { return weigh(t, ad::matmul(t, v[0], v[1])); },
                   {random_mat(3, 4, rng), random_mat(4, 2, rng)}) < 1e-6);
    CHECK(check_op([](ad::Tape& t, const auto& v) { return weigh(t, ad::matmul_bt(t, v[0], v[1])); },
                   {random_mat(3, 4, rng), random_mat(5, 4, rng)}) < 1e-6);
    CHECK(check_op([](ad::Tape& t, const auto& v) { return weigh(t, ad::affine(t, v[0], v[1], v[2])); },
                   {random_mat(3, 4, rng), random_mat(4, 2, rng), random_mat(1, 2, rng)}) < 1e-6);
    CHECK(check_op([](ad::Tape& t, const auto& v) { return weigh(t, ad::add_row(t, v[0], v[1])); },
                   {random_mat(3, 4, rng), random_mat(1, 4, rng)}) < 1e-6);
    CHECK(check_op([](ad::Tape& t, const auto& v) { return weigh(t, ad::scale(t, ad::add(t, v[0], v[1]), -2.5)); },
                   {random_mat(2, 3, rng), random_mat(2, 3, rng)}) < 1e-6);
}

TEST_CASE("nonlinearities and normalisation have correct gradients") {
    Rng rng(2);
    CHECK(check_op([](ad::Tape& t, const auto& v) { return weigh(t, ad::gelu(t, v[0])); },
                   {random_mat(3, 5, rng)}) < 1e-6);
    CHECK(check_op([](ad::Tape& t, const auto& v) { return weigh(t, ad::layer_norm(t, v[0], v[1], v[2])); },
                   {random_mat(3, 6, rng), random_mat(1, 6, rng), random_mat(1, 6, rng)}) < 1e-5);
    CHECK(check_op([](ad::Tape& t, const auto& v) { return weigh(t, ad::l2_normalize_rows(t, v[0])); },
                   {random_mat(4, 3, rng)}) < 1e-6);
    CHECK(check_op([](ad::Tape& t, const auto& v) { return weigh(t, ad::attention(t, v[0], 2)); },
                   {random_mat(5, 12, rng)}) < 1e-5);
}

TEST_CASE("row manipulation ops have correct gradients") {
    Rng rng(3);
    CHECK(check_op([](ad::Tape& t, const auto& v) {
              const int rows[] = {2, 0, 2};
              return weigh(t, ad::gather_rows(t, v[0], rows));
          },
          {random_mat(3, 4, rng)}) < 1e-6);
    CHECK(check_op([](ad::Tape& t, const auto& v) {
              const ad::Var parts[] = {v[0], v[1]};
              return weigh(t, ad::concat_rows(t, parts));
          },
          {random_mat(2, 3, rng), random_mat(1, 3, rng)}) < 1e-6);
    CHECK(check_op([](ad::Tape& t, const auto& v) {
              const int pos[] = {1, 3};
              return weigh(t, ad::assemble_rows(t, v[0], v[1], pos, 5));
          },
          {random_mat(2, 3, rng), random_mat(1, 3, rng)}) < 1e-6);
}

TEST_CASE("loss reductions have correct gradients") {
    Rng rng(4);
    const Mat target = random_mat(3, 2, rng);
    CHECK(check_op([&](ad::Tape& t, const auto& v) { return ad::mse(t, v[0], target); },
                   {random_mat(3, 2, rng)}) < 1e-6);
    CHECK(check_op([](ad::Tape& t, const auto& v) { return ad::row_distance(t, v[0], 0, 2); },
                   {random_mat(3, 4, rng)}) < 1e-6);
    const std::vector<int> labels{0, 2, 1, 1, 0, 2};
    CHECK(check_op([&](ad::Tape& t, const auto& v) {
              return ad::grouped_cross_entropy(t, v[0], labels, 3, 2);
          },
          {random_mat(3, 6, rng)}) < 1e-6);
}

TEST_CASE("relu, detach and distance edge cases") {
    ad::Tape t;
    const ad::Var x = t.push(Mat::Constant(1, 1, 0.0), true, {});
    const ad::Var y = ad::relu(t, x);
    t.backward(y);
    CHECK((t.grad(x).size() == 0 || t.grad(x)(0, 0) == 0.0));

    ad::Tape t2;
    const ad::Var a = t2.push(Mat::Ones(2, 3), true, {});
    const ad::Var d = ad::row_distance(t2, a, 0, 1);
    CHECK(t2.value(d)(0, 0) == 0.0);
    t2.backward(d);
    CHECK((t2.grad(a).size() == 0 || t2.grad(a).cwiseAbs().maxCoeff() == 0.0));

    ad::Tape t3;
    const ad::Var b = t3.push(Mat::Constant(1, 1, 2.0), true, {});
    const ad::Var parts[] = {ad::detach(t3, b), b};
    t3.backward(ad::sum(t3, parts));
    CHECK(t3.grad(b)(0, 0) == 1.0);

    ad::Tape t4;
    const ad::Var z = t4.push(Mat::Zero(1, 3), true, {});
    CHECK_THROWS_AS(ad::l2_normalize_rows(t4, z), std::invalid_argument);
    CHECK_THROWS_AS(t4.backward(z), std::invalid_argument);
}

TEST_CASE("grouped cross-entropy matches a direct softmax") {
    ad::Tape t;
    Mat z(1, 4);
    z << 1.0, -0.5, 0.25, 2.0;  // classes 2, groups 2: item 0 = (1.0, 0.25), item 1 = (-0.5, 2.0)
    const std::vector<int> labels{1, 0};
    const ad::Var loss = ad::grouped_cross_entropy(t, t.constant(z), labels, 2, 2);
    const double l0 = -std::log(std::exp(0.25) / (std::exp(1.0) + std::exp(0.25)));
    const double l1 = -std::log(std::exp(-0.5) / (std::exp(-0.5) + std::exp(2.0)));
    CHECK(t.value(loss)(0, 0) == doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-14));
}
