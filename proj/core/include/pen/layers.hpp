#pragma once

#include <random>
#include <string>

#include "pen/autograd.hpp"
#include "pen/checkpoint.hpp"

namespace pen {

/// y = x W + b with W [in, out].
template <typename T>
struct Linear {
    Parameter<T>* weight = nullptr;
    Parameter<T>* bias = nullptr;

    static Linear create(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out,
                         std::mt19937_64& rng)
    {
        Linear l;
        l.weight = &params.add(name + ".weight", glorot_uniform<T>({in, out}, in, out, rng));
        l.bias = &params.add(name + ".bias", Tensor<T>({out}));
        return l;
    }

    Var<T> operator()(Graph<T>& g, const Var<T>& x) const
    {
        return add(matmul(x, g.parameter(*weight)), g.parameter(*bias));
    }
};

/// Glorot-initialised LSTM with forget-gate bias 1.
template <typename T>
LstmParams<T> make_lstm(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t hidden,
                        std::mt19937_64& rng)
{
    LstmParams<T> p;
    p.w_input = &params.add(name + ".w_input", glorot_uniform<T>({in, 4 * hidden}, in, 4 * hidden, rng));
    p.w_hidden = &params.add(name + ".w_hidden", glorot_uniform<T>({hidden, 4 * hidden}, hidden, 4 * hidden, rng));
    Tensor<T> bias({4 * hidden});
    std::fill(bias.data.begin() + static_cast<std::ptrdiff_t>(hidden),
              bias.data.begin() + static_cast<std::ptrdiff_t>(2 * hidden), T{1});
    p.bias = &params.add(name + ".bias", std::move(bias));
    return p;
}

}  // namespace pen
