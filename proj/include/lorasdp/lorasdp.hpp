#pragma once

#include "lorasdp/errors.hpp"
#include "lorasdp/dense.hpp"
#include "lorasdp/problem.hpp"
#include "lorasdp/io.hpp"
#include "lorasdp/linops.hpp"
#include "lorasdp/operators.hpp"
#include "lorasdp/state.hpp"
#include "lorasdp/alm.hpp"
#include "lorasdp/admm.hpp"
#include "lorasdp/spectral.hpp"
#include "lorasdp/driver.hpp"
