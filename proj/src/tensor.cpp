#include "msrgan/tensor.hpp"

namespace msrgan {

int64_t numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeMismatch("negative dimension in tensor shape");
        n *= d;
    }
    return n;
}

} // namespace msrgan
