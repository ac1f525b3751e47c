#pragma once

#include <string>

#include "gsmforge/image.hpp"

namespace gsmforge {

/// Binary PPM (P6, maxval 255) reader. Pixels map to [0,1] via v/255.
/// Malformed headers, unsupported maxval, and truncation are rejected with
/// the byte offset of the problem.
Image load_image(const std::string& path);

/// Canonical P6 writer: "P6\n<w> <h>\n255\n" + RGB bytes, rounding each
/// channel to the nearest of 255 levels.
void save_image(const Image& img, const std::string& path);

}  // namespace gsmforge
