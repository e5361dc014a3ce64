#include "atproto/fakenet.hpp"

// Header-only today; the translation unit anchors the vtable.
namespace atproto::net {}
