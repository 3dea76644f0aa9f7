#include "doctest.h"

#include "gridsync/engine.hpp"

TEST_CASE("placeholder") { CHECK(true); }
