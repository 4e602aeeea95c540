#ifndef SERBF_SERBF_HPP
#define SERBF_SERBF_HPP

#include "serbf/core.hpp"
#include "serbf/error.hpp"
#include "serbf/extract.hpp"
#include "serbf/grad.hpp"
#include "serbf/init.hpp"
#include "serbf/io.hpp"
#include "serbf/kdtree.hpp"
#include "serbf/marching_cubes.hpp"
#include "serbf/mesh.hpp"
#include "serbf/metrics.hpp"
#include "serbf/optim.hpp"
#include "serbf/parallel.hpp"
#include "serbf/random.hpp"
#include "serbf/sdf.hpp"
#include "serbf/spatial.hpp"

#endif // SERBF_SERBF_HPP
