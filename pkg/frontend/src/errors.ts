/**
 * Error taxonomy mirroring the CLI's machine-readable failure codes.
 *
 * Every CLI failure arrives as one stderr line of JSON,
 * `{"error": "<code>", "message": "..."}`; `errorFromCode` maps the code
 * onto the matching exception class so callers can `instanceof`-dispatch
 * exactly as core-language callers would.
 */

/** Base class for every error thrown by this package. */
export class AsqlError extends Error {
  /** Stable machine-readable code (the core error class name). */
  readonly code: string;

  constructor(code: string, message: string) {
    super(message);
    this.name = code;
    this.code = code;
  }
}

/** The scene document is not syntactically valid. */
export class DocumentSyntaxError extends AsqlError {
  constructor(message: string) {
    super("DocumentSyntaxError", message);
  }
}

/** A well-formed input violates a semantic rule. */
export class ValidationError extends AsqlError {
  constructor(message: string) {
    super("ValidationError", message);
  }
}

/** Two constraints on the same pair and axis contradict each other. */
export class ConflictError extends AsqlError {
  constructor(message: string) {
    super("ConflictError", message);
  }
}

/** The strict directional constraints form a cycle. */
export class CycleError extends AsqlError {
  constructor(message: string) {
    super("CycleError", message);
  }
}

/** The grid cannot seat all entities under their constraints. */
export class CapacityError extends AsqlError {
  constructor(message: string) {
    super("CapacityError", message);
  }
}

/** Clustering left an entity with zero cells. */
export class StarvationError extends AsqlError {
  constructor(message: string) {
    super("StarvationError", message);
  }
}

/** An entity region cannot be split into the requested sub-regions. */
export class QuantityError extends AsqlError {
  constructor(message: string) {
    super("QuantityError", message);
  }
}

/** A mask region is empty (possibly after resampling). */
export class EmptyRegionError extends AsqlError {
  constructor(message: string) {
    super("EmptyRegionError", message);
  }
}

/** A tensor or map has the wrong shape or dtype. */
export class ShapeError extends AsqlError {
  constructor(message: string) {
    super("ShapeError", message);
  }
}

/** A subprocess (the CLI or an external provider) failed to run. */
export class TransportError extends AsqlError {
  constructor(message: string) {
    super("TransportError", message);
  }
}

/** A subprocess ran but spoke garbage. */
export class ProtocolError extends AsqlError {
  constructor(message: string) {
    super("ProtocolError", message);
  }
}

/** A tensor file is malformed. */
export class FormatError extends AsqlError {
  constructor(message: string) {
    super("FormatError", message);
  }
}

/** The optimizer produced a non-finite value. */
export class NonFiniteError extends AsqlError {
  constructor(message: string) {
    super("NonFiniteError", message);
  }
}

/** The CLI could not read or write a file. */
export class IoError extends AsqlError {
  constructor(message: string) {
    super("IOError", message);
  }
}

const CONSTRUCTORS: Record<string, new (message: string) => AsqlError> = {
  DocumentSyntaxError,
  ValidationError,
  ConflictError,
  CycleError,
  CapacityError,
  StarvationError,
  QuantityError,
  EmptyRegionError,
  ShapeError,
  TransportError,
  ProtocolError,
  FormatError,
  NonFiniteError,
  IOError: IoError,
};

/** Instantiate the exception class matching a CLI error code. */
export function errorFromCode(code: string, message: string): AsqlError {
  const ctor = CONSTRUCTORS[code];
  return ctor ? new ctor(message) : new AsqlError(code, message);
}
