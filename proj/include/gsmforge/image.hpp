#pragma once

#include "gsmforge/tensor.hpp"

namespace gsmforge {

/// Three-channel image, pixels in [0,1], stored as a [3,H,W] tensor.
/// The codec additionally requires dims divisible by 4 at its entry points.
struct Image {
    Tensor t;

    Image() = default;
    explicit Image(Tensor tensor);
    Image(int height, int width);

    int height() const { return t.dim(1); }
    int width() const { return t.dim(2); }
    std::size_t numel() const { return t.numel(); }

    double& at(int c, int y, int x) {
        return t.data[(static_cast<std::size_t>(c) * height() + y) * width() + x];
    }
    double at(int c, int y, int x) const {
        return t.data[(static_cast<std::size_t>(c) * height() + y) * width() + x];
    }

    /// Throws unless all pixels are in [0,1].
    void validate() const;
};

/// Elementwise clamp of an image-shaped tensor into a valid Image.
Image clamp_to_image(const Tensor& raw);

}  // namespace gsmforge
