#ifndef NHNN_SPECIAL_HPP
#define NHNN_SPECIAL_HPP

// Scalar special functions used by the variational updates and the
// t-distribution CDF.

namespace nhnn {

// Digamma (psi) function for x > 0.
double digamma(double x);

// Regularized incomplete beta function I_x(a, b), a,b > 0, x in [0,1].
// Continued-fraction evaluation, absolute error well below 1e-10.
double ibeta_reg(double a, double b, double x);

// Two-sided p-value of Student's t statistic with df degrees of freedom.
double student_t_two_sided_p(double t, int df);

// log(sum(exp(v))) over n entries, stable.
double log_sum_exp(const double* v, int n);

}  // namespace nhnn

#endif
