//! In-process service hosting: when no `--server` is given, the CLI binds an
//! ephemeral local port, runs the service on a background runtime thread,
//! and talks to itself over HTTP like any other client.

pub struct LocalService {
    pub base_url: String,
}

pub fn spawn() -> std::io::Result<LocalService> {
    let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime");
        rt.block_on(async move {
            listener.set_nonblocking(true).expect("nonblocking listener");
            let listener = tokio::net::TcpListener::from_std(listener).expect("tokio listener");
            if let Err(err) = mdfocus_service::serve(listener).await {
                eprintln!("local service terminated: {err}");
            }
        });
    });
    Ok(LocalService {
        base_url: format!("http://{addr}"),
    })
}
