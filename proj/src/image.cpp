#include "gsmforge/image.hpp"

#include <stdexcept>

namespace gsmforge {

namespace {

// Divisibility by 4 is a codec-entry requirement (two stride-2 layers),
// checked there; plain images may have any positive dims.
void check_dims(const std::vector<int>& dims) {
    if (dims.size() != 3 || dims[0] != 3)
        throw std::invalid_argument("image must be [3,H,W], got " + shape_str(dims));
}

}  // namespace

Image::Image(Tensor tensor) : t(std::move(tensor)) { check_dims(t.dims); }

Image::Image(int height, int width) : t(Tensor::zeros({3, height, width})) { check_dims(t.dims); }

void Image::validate() const {
    check_dims(t.dims);
    for (double p : t.data)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("image pixel out of [0,1]: " + std::to_string(p));
}

Image clamp_to_image(const Tensor& raw) {
    check_dims(raw.dims);
    Image img;
    img.t = raw;
    img.t.grad.clear();
    for (double& p : img.t.data) {
        if (p < 0.0) p = 0.0;
        if (p > 1.0) p = 1.0;
    }
    return img;
}

}  // namespace gsmforge
