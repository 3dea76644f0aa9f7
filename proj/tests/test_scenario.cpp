#include "doctest.h"

#include "gridsync/scenario.hpp"

TEST_CASE("placeholder") { CHECK(true); }
