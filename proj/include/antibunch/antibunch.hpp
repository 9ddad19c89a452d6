#pragma once

#include "antibunch/core.hpp"
#include "antibunch/sim.hpp"
#include "antibunch/correlator.hpp"
#include "antibunch/fit/levenberg_marquardt.hpp"
#include "antibunch/fit/models.hpp"
#include "antibunch/fit/g2.hpp"
#include "antibunch/fit/lifetime.hpp"
#include "antibunch/blinking.hpp"
#include "antibunch/io/timestamp_file.hpp"
#include "antibunch/io/csv.hpp"
#include "antibunch/io/report.hpp"
#include "antibunch/pipeline.hpp"
