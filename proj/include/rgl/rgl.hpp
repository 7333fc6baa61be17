#pragma once

#include "rgl/beta_path.hpp"
#include "rgl/engine.hpp"
#include "rgl/errors.hpp"
#include "rgl/groups.hpp"
#include "rgl/kkt.hpp"
#include "rgl/lambda_path.hpp"
#include "rgl/linalg.hpp"
#include "rgl/path.hpp"
#include "rgl/wabs.hpp"
