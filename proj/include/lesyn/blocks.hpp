#pragma once

// conv -> [batch norm] -> leaky (-> dropout) building block shared by the networks.
// Parameter names follow "<block>.conv.weight", "<block>.conv.bias", "<block>.bn.*".

#include <string>

#include "lesyn/kernels.hpp"
#include "lesyn/layers.hpp"
#include "lesyn/params.hpp"

namespace lesyn::blocks {

template <typename T>
struct BlockTape {
    Tensor<T> input;  // convolution input (already upsampled for decoder blocks)
    layers::BatchNormCache<T> bn;
    bool has_bn = false;
    Tensor<T> activation;
    Tensor<T> dropout;  // empty when no dropout was applied
    int skip_channels = 0;
};

template <typename T>
std::span<const T> optional_span(const ParamSet<T>& p, const std::string& name) {
    return p.contains(name) ? p.span(name) : std::span<const T>{};
}

template <typename T>
Tensor<T> conv_block_forward(const ParamSet<T>& p, const std::string& block, Tensor<T> input,
                             kernels::ConvGeometry geom, bool bn, Mode mode, T slope, BlockTape<T>& tape) {
    Tensor<T> z = kernels::conv2d_forward(input, p[block + ".conv.weight"], optional_span(p, block + ".conv.bias"), geom);
    tape.has_bn = bn;
    if (bn) {
        if (mode == Mode::train)
            z = layers::batchnorm_train(z, p.span(block + ".bn.scale"), p.span(block + ".bn.shift"), tape.bn);
        else
            z = layers::batchnorm_eval(z, p.span(block + ".bn.scale"), p.span(block + ".bn.shift"),
                                       p.span(block + ".bn.running_mean"), p.span(block + ".bn.running_var"));
    }
    tape.input = std::move(input);
    tape.activation = layers::leaky_relu(std::move(z), slope);
    return tape.activation;
}

/// Returns d(loss)/d(input) when `need_input_grad`, else an empty tensor.
template <typename T>
Tensor<T> conv_block_backward(const ParamSet<T>& p, const std::string& block, const BlockTape<T>& tape,
                              Tensor<T> grad, kernels::ConvGeometry geom, T slope, ParamSet<T>& grads,
                              bool need_input_grad) {
    if (!tape.dropout.data.empty()) grad = layers::multiply(std::move(grad), tape.dropout);
    grad = layers::leaky_relu_backward(std::move(grad), tape.activation, slope);
    if (tape.has_bn)
        grad = layers::batchnorm_backward(grad, tape.bn, p.span(block + ".bn.scale"), grads.span(block + ".bn.scale"),
                                          grads.span(block + ".bn.shift"));
    Tensor<T> dx;
    std::span<T> dbias = grads.contains(block + ".conv.bias") ? grads.span(block + ".conv.bias") : std::span<T>{};
    kernels::conv2d_backward(tape.input, p[block + ".conv.weight"], grad, geom, need_input_grad ? &dx : nullptr,
                             grads[block + ".conv.weight"], dbias);
    return dx;
}

template <typename T>
void commit_block_stats(ParamSet<T>& p, const std::string& block, const BlockTape<T>& tape) {
    if (!tape.has_bn) return;
    layers::update_running_stats(p.span(block + ".bn.running_mean"), p.span(block + ".bn.running_var"), tape.bn);
}

}  // namespace lesyn::blocks
