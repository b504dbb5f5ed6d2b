"""
Flask app initialization
"""
import logging

from flask import Flask
from flask_cors import CORS

from app.config import AnalysisConfig, log_level


def configure_logging(level=None):
    logging.basicConfig(
        level=level if level is not None else log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def create_app(config: AnalysisConfig = None):
    configure_logging()

    # init flask app
    app = Flask(__name__)

    # enable cors for api calls
    CORS(app,
         resources={r"/api/*": {"origins": "*"}},
         allow_headers=["Content-Type"])

    # load config
    app.config['ANALYSIS_CONFIG'] = config or AnalysisConfig.from_env()
    app.config['MAX_CONTENT_LENGTH'] = 1 * 1024 * 1024  # protocol and scenario text only

    # register blueprints
    from app.services.analysis import analysis_bp
    from app.services.unification import unify_bp

    app.register_blueprint(analysis_bp, url_prefix='/api')
    app.register_blueprint(unify_bp, url_prefix='/api')

    # health check
    @app.route('/api/health')
    def health():
        from datetime import datetime

        from flask import jsonify

        services_status = {}
        try:
            import numpy  # noqa: F401
            services_status["gf2_solver"] = True
        except ImportError:
            services_status["gf2_solver"] = False

        try:
            from app.utils.dsl_io import parse_term
            services_status["parser"] = parse_term("pk(a)") is not None
        except ImportError:
            services_status["parser"] = False

        return jsonify({
            "status": "healthy",
            "timestamp": datetime.now().isoformat(),
            "services": services_status,
        })

    return app
