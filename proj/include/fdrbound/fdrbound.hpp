#pragma once

#include "fdrbound/bounds.hpp"
#include "fdrbound/config.hpp"
#include "fdrbound/control.hpp"
#include "fdrbound/csv.hpp"
#include "fdrbound/error.hpp"
#include "fdrbound/hlz.hpp"
#include "fdrbound/normal.hpp"
#include "fdrbound/panel.hpp"
#include "fdrbound/random.hpp"
#include "fdrbound/report_io.hpp"
#include "fdrbound/simkit.hpp"

namespace fdrbound {
inline constexpr const char* version = "0.1.0";
}
