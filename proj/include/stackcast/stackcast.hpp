#pragma once

#include "stackcast/bounds.hpp"
#include "stackcast/data.hpp"
#include "stackcast/errors.hpp"
#include "stackcast/io.hpp"
#include "stackcast/loss.hpp"
#include "stackcast/objective.hpp"
#include "stackcast/optimize.hpp"
#include "stackcast/pipeline.hpp"
#include "stackcast/synthetic.hpp"
