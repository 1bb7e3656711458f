#pragma once

namespace tedl::specfun {

// ln Gamma(x) for x > 0. Throws DomainError otherwise.
double ln_gamma(double x);

// psi(x) = d/dx ln Gamma(x) for x > 0. Throws DomainError otherwise.
double digamma(double x);

// psi'(x) for x > 0; needed by the gradient of the Dirichlet KL term.
double trigamma(double x);

} // namespace tedl::specfun
