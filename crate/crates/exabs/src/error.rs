use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: duplicate article id {id:?} at line {line}")]
    DuplicateId { path: PathBuf, id: String, line: usize },
    #[error("{path}: empty article id at line {line}")]
    EmptyId { path: PathBuf, line: usize },
    #[error("{0}: no documents survived filtering")]
    NoDocuments(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("unknown translator {0:?}")]
    UnknownTranslator(String),
    #[error("{doc_id}: {source}")]
    Document { doc_id: String, source: Box<Error> },
    #[error("stage {stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
    #[error(transparent)]
    Core(#[from] exabs_core::Error),
    #[error("plot: {0}")]
    Plot(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn in_doc(doc_id: &str, e: impl Into<Error>) -> Self {
        Error::Document { doc_id: doc_id.to_owned(), source: Box::new(e.into()) }
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageContext<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage { stage, source: Box::new(e.into()) })
    }
}
