#include "semiprop/hamiltonian.hpp"

namespace semiprop {

using D1 = Dual<cplx>;
using D2 = Dual<Dual<cplx>>;

cplx effective_hamiltonian_value(const Family& fam, const OperatorPolynomial& H, const PhasePoint& p,
                                 double t) {
    return forms::eff_hamiltonian(fam, H, forms::to_std(p.zbar), forms::to_std(p.z), t);
}

EffectiveHamiltonianEval effective_hamiltonian(const Family& fam, const OperatorPolynomial& H,
                                               const PhasePoint& p, double t) {
    const int d = fam.dim();
    EffectiveHamiltonianEval out;
    out.grad_z.resize(d);
    out.grad_zbar.resize(d);
    out.hess_zz.resize(d, d);
    out.hess_zbarzbar.resize(d, d);
    out.hess_zzbar.resize(d, d);

    auto zb0 = forms::to_std(p.zbar);
    auto z0 = forms::to_std(p.z);

    // one second-order evaluation per seed pair; variables 0..d-1 are z,
    // d..2d-1 are zbar
    auto eval_pair = [&](int u, int w) -> D2 {
        std::vector<D2> zb(d), zz(d);
        for (int j = 0; j < d; ++j) {
            zz[j] = D2(D1(z0[j], cplx(0)), D1(cplx(0), cplx(0)));
            zb[j] = D2(D1(zb0[j], cplx(0)), D1(cplx(0), cplx(0)));
        }
        auto seed_outer = [&](int v) { // tangent of the outer dual
            if (v < d) zz[v].d.v = cplx(1.0);
            else zb[v - d].d.v = cplx(1.0);
        };
        auto seed_inner = [&](int v) { // tangent of the inner dual
            if (v < d) zz[v].v.d = cplx(1.0);
            else zb[v - d].v.d = cplx(1.0);
        };
        seed_outer(u);
        seed_inner(w);
        return forms::eff_hamiltonian(fam, H, zb, zz, t);
    };

    bool have_value = false;
    for (int u = 0; u < d; ++u) {
        for (int w = u; w < 2 * d; ++w) {
            D2 r = eval_pair(u, w);
            if (!have_value) {
                out.value = r.v.v;
                have_value = true;
            }
            if (u < d) out.grad_z[u] = r.d.v;
            if (w < d) {
                out.grad_z[w] = r.v.d;
                out.hess_zz(u, w) = r.d.d;
                out.hess_zz(w, u) = r.d.d;
            } else {
                out.grad_zbar[w - d] = r.v.d;
                out.hess_zzbar(u, w - d) = r.d.d;
            }
        }
    }
    for (int u = 0; u < d; ++u) {
        for (int w = u; w < d; ++w) {
            D2 r = eval_pair(d + u, d + w);
            out.hess_zbarzbar(u, w) = r.d.d;
            out.hess_zbarzbar(w, u) = r.d.d;
        }
    }
    return out;
}

} // namespace semiprop
