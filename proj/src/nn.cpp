#include "gvqa/nn.hpp"

// Layer types are header-only; this unit just anchors the header's symbols
// into the library.
